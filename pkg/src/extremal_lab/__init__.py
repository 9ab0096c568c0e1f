"""Numerical laboratory for planar domains carrying constant-Neumann
overdetermined elliptic solutions: meshing and geometry predicates, a P1
finite-element layer, residual/criterion verifiers, and shape optimization
(eigenvalue descent flow and periodic-strip branch continuation)."""

__version__ = "0.1.0"
