"""Shared expensive fixtures: meshes are deterministic in (spec, h), so one
instance per session is representative."""

import numpy as np
import pytest

from extremal_lab.geom2d import Disk, Ellipse, PeriodicStrip, Polygon, build_domain


@pytest.fixture(scope="session")
def disk_mesh_h05():
    return build_domain(Disk(1.0), 0.05)


@pytest.fixture(scope="session")
def disk_mesh_h02():
    return build_domain(Disk(1.0), 0.02)


@pytest.fixture(scope="session")
def disk_mesh_h04():
    return build_domain(Disk(1.0), 0.04)


@pytest.fixture(scope="session")
def disk_mesh_h08():
    return build_domain(Disk(1.0), 0.08)


@pytest.fixture(scope="session")
def ellipse_mesh_h02():
    return build_domain(Ellipse(2.0, 1.0), 0.02)


@pytest.fixture(scope="session")
def square_mesh():
    return build_domain(Polygon(((0, 0), (1, 0), (1, 1), (0, 1))), 0.05)


@pytest.fixture(scope="session")
def strip_mesh():
    # straight strip of width pi (lambda = 1), one period of length 2*pi
    return build_domain(PeriodicStrip(2 * np.pi, (np.pi / 2,)), 0.08)
