"""Planar domain descriptions, meshing, boundary geometry, and the geometric
predicates (inscribed balls, cap reflection, component diameters)."""

from .domain import (
    Annulus,
    Disk,
    DomainSpec,
    Ellipse,
    PeriodicStrip,
    Polygon,
    domain_spec_from_json,
    domain_spec_to_json,
)
from .meshing import Mesh, build_domain
from .boundary import BoundaryGeometry, boundary_geometry
from .predicates import (
    CapComponent,
    CapReport,
    Line,
    cap_reflect,
    component_diameter,
    inscribed_ball,
    min_enclosing_circle,
)

__all__ = [
    "Annulus",
    "BoundaryGeometry",
    "CapComponent",
    "CapReport",
    "Disk",
    "DomainSpec",
    "Ellipse",
    "Line",
    "Mesh",
    "PeriodicStrip",
    "Polygon",
    "boundary_geometry",
    "build_domain",
    "cap_reflect",
    "component_diameter",
    "domain_spec_from_json",
    "domain_spec_to_json",
    "inscribed_ball",
    "min_enclosing_circle",
]
