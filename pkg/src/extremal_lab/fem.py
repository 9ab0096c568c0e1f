"""Piecewise-linear finite elements on the geometry layer's meshes.

Assembly produces exactly symmetric stiffness/mass pairs (periodic meshes are
folded onto one degree of freedom per physical vertex), the smallest Dirichlet
eigenpair comes from shift-inverted iteration with Rayleigh acceleration on a
sparse direct factorization, the semilinear solver is a damped Newton
iteration, and boundary fluxes are recovered variationally (lumped through the
one-dimensional boundary mass matrix), which is markedly more accurate than
sampling raw element gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .errors import (
    DegenerateTriangle,
    IterationLimit,
    NewtonDiverged,
    NonPositiveSolution,
)
from .geom2d.meshing import Mesh

# -- fields and matrices --------------------------------------------------------


@dataclass
class ScalarField:
    """Per-vertex nodal values on a mesh (duplicated periodic columns agree)."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if len(self.values) != len(self.mesh.vertices):
            raise ValueError("field length must equal the vertex count")

    def export_csv(self) -> str:
        lines = ["vertex_index,x,y,value"]
        for i, ((x, y), v) in enumerate(zip(self.mesh.vertices, self.values)):
            lines.append(f"{i},{float(x)!r},{float(y)!r},{float(v)!r}")
        return "\n".join(lines) + "\n"


@dataclass
class SparseSym:
    """Symmetric sparse matrix in CSR storage with definiteness flags."""

    mat: sparse.csr_matrix
    symmetric: bool = True
    positive_semidefinite: bool = True

    @property
    def n(self) -> int:
        return self.mat.shape[0]

    @property
    def indptr(self) -> np.ndarray:
        return self.mat.indptr

    @property
    def indices(self) -> np.ndarray:
        return self.mat.indices

    @property
    def values(self) -> np.ndarray:
        return self.mat.data

    def __matmul__(self, other: np.ndarray) -> np.ndarray:
        return self.mat @ other

    def export_matrix_market(self) -> str:
        coo = self.mat.tocoo()
        lines = [
            "%%MatrixMarket matrix coordinate real general",
            f"{self.n} {self.n} {coo.nnz}",
        ]
        for i, j, v in zip(coo.row, coo.col, coo.data):
            lines.append(f"{i + 1} {j + 1} {float(v)!r}")
        return "\n".join(lines) + "\n"


@dataclass
class EigenPair:
    """Smallest Dirichlet eigenvalue with its mass-normalized eigenfunction."""

    lambda1: float
    u1: ScalarField
    residual: float
    iterations: int


def assemble(mesh: Mesh) -> tuple[SparseSym, SparseSym]:
    """P1 stiffness and consistent mass matrices on the mesh's DOFs."""
    tri = mesh.triangles
    p = mesh.vertices[tri]
    b = np.stack(
        [p[:, 1, 1] - p[:, 2, 1], p[:, 2, 1] - p[:, 0, 1], p[:, 0, 1] - p[:, 1, 1]], axis=1
    )
    c = np.stack(
        [p[:, 2, 0] - p[:, 1, 0], p[:, 0, 0] - p[:, 2, 0], p[:, 1, 0] - p[:, 0, 0]], axis=1
    )
    area = 0.5 * (
        (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
        - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    )
    if np.any(area < 1e-14):
        raise DegenerateTriangle(f"triangle area below 1e-14 (min {area.min():.3e})")

    ke = (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :]) / (4.0 * area)[
        :, None, None
    ]
    me = (np.ones((3, 3)) + np.eye(3))[None, :, :] * (area / 12.0)[:, None, None]

    dof = mesh.dof_of_vertex[tri]
    rows = np.repeat(dof, 3, axis=1).ravel()
    cols = np.tile(dof, (1, 3)).ravel()
    n = mesh.n_dofs
    k = sparse.coo_matrix((ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    m = sparse.coo_matrix((me.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    k.sum_duplicates()
    m.sum_duplicates()
    return SparseSym(k), SparseSym(m)


def dirichlet_mask(mesh: Mesh) -> np.ndarray:
    """Boolean mask over DOFs marking the boundary vertices."""
    mask = np.zeros(mesh.n_dofs, dtype=bool)
    mask[mesh.dof_of_vertex[mesh.boundary_vertex_ids()]] = True
    return mask


def eigen_smallest(
    k: SparseSym,
    m: SparseSym,
    dirichlet: np.ndarray,
    mesh: Mesh,
    tol: float = 1e-10,
    max_iter: int = 500,
    shift: float = 0.0,
) -> EigenPair:
    """Generalized eigenpair K x = lambda M x on the interior DOFs.

    Shift-inverted power iteration; a shift just below the target eigenvalue
    (e.g. 0.98 * an analytic estimate) speeds up nearly-degenerate spectra,
    and the factorization is re-shifted at the current Rayleigh quotient
    whenever plain iteration converges slowly.
    """
    interior = np.nonzero(~np.asarray(dirichlet))[0]
    ki = k.mat[interior][:, interior].tocsc()
    mi = m.mat[interior][:, interior].tocsc()

    lu = splu((ki - shift * mi).tocsc() if shift else ki)
    v = np.ones(len(interior))
    v /= math.sqrt(v @ (mi @ v))
    rho = float(v @ (ki @ v))
    it = 0
    refactors = 0
    residual = math.inf
    while it < max_iter:
        it += 1
        w = lu.solve(mi @ v)
        nrm = math.sqrt(w @ (mi @ w))
        v = w / nrm
        rho = float(v @ (ki @ v)) / float(v @ (mi @ v))
        r = ki @ v - rho * (mi @ v)
        residual = float(np.linalg.norm(r) / np.linalg.norm(rho * (mi @ v)))
        if residual <= tol:
            break
        if it % 25 == 0 and refactors < 4 and residual > 100 * tol:
            sigma = rho * (1.0 - 1e-8)
            lu = splu((ki - sigma * mi).tocsc())
            refactors += 1
    else:
        raise IterationLimit(
            f"eigen iteration hit {max_iter} iterations at residual {residual:.3e}",
            residual=residual,
        )

    if float(np.sum(v)) < 0:
        v = -v
    full_dof = np.zeros(mesh.n_dofs)
    full_dof[interior] = v
    u = ScalarField(mesh, mesh.expand(full_dof))
    return EigenPair(lambda1=float(rho), u1=u, residual=residual, iterations=it)


# -- nonlinearities --------------------------------------------------------------


@dataclass(frozen=True)
class Linear:
    """f(u) = lam * u."""

    lam: float

    def f(self, u):
        return self.lam * np.asarray(u, dtype=float)

    def fprime(self, u):
        return np.full_like(np.asarray(u, dtype=float), self.lam)

    def antiderivative(self, u):
        u = np.asarray(u, dtype=float)
        return 0.5 * self.lam * u * u

    def lipschitz(self) -> float:
        return abs(self.lam)


@dataclass(frozen=True)
class AllenCahn:
    """f(u) = u - u^3."""

    def f(self, u):
        u = np.asarray(u, dtype=float)
        return u - u**3

    def fprime(self, u):
        u = np.asarray(u, dtype=float)
        return 1.0 - 3.0 * u * u

    def antiderivative(self, u):
        u = np.asarray(u, dtype=float)
        return 0.5 * u * u - 0.25 * u**4

    def lipschitz(self, umax: float = 1.0) -> float:
        return max(1.0, 3.0 * umax * umax - 1.0)


@dataclass(frozen=True)
class Tabulated:
    """Piecewise-linear f over breakpoints, antiderivative by exact trapezoid."""

    breakpoints: tuple[float, ...]
    fvalues: tuple[float, ...]
    lipschitz_constant: float

    def __post_init__(self) -> None:
        x = np.asarray(self.breakpoints)
        y = np.asarray(self.fvalues)
        if len(x) != len(y) or len(x) < 2 or np.any(np.diff(x) <= 0):
            raise ValueError("breakpoints must be increasing and match values")
        slopes = np.diff(y) / np.diff(x)
        if np.max(np.abs(slopes)) > self.lipschitz_constant * (1 + 1e-12):
            raise ValueError("samples violate the declared Lipschitz constant")

    def f(self, u):
        return np.interp(np.asarray(u, dtype=float), self.breakpoints, self.fvalues)

    def fprime(self, u):
        x = np.asarray(self.breakpoints)
        slopes = np.diff(np.asarray(self.fvalues)) / np.diff(x)
        idx = np.clip(np.searchsorted(x, np.asarray(u, dtype=float), side="right") - 1, 0,
                      len(slopes) - 1)
        return slopes[idx]

    def _accumulated(self, u: np.ndarray) -> np.ndarray:
        """Integral of the interpolant from breakpoints[0] to u (trapezoid at
        breakpoints, exact quadratic within a segment, constant-f beyond)."""
        x = np.asarray(self.breakpoints)
        y = np.asarray(self.fvalues)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x))])
        idx = np.clip(np.searchsorted(x, u, side="right") - 1, 0, len(x) - 2)
        du = np.clip(u, x[0], x[-1]) - x[idx]
        slope = (y[idx + 1] - y[idx]) / (x[idx + 1] - x[idx])
        out = cum[idx] + y[idx] * du + 0.5 * slope * du * du
        out = np.where(u < x[0], y[0] * (u - x[0]), out)
        out = np.where(u > x[-1], cum[-1] + y[-1] * (u - x[-1]), out)
        return out

    def antiderivative(self, u):
        u = np.asarray(u, dtype=float)
        return self._accumulated(u) - self._accumulated(np.zeros(1))[0]

    def lipschitz(self) -> float:
        return self.lipschitz_constant


NonlinearitySpec = Union[Linear, AllenCahn, Tabulated]


def satisfies_p2(f: NonlinearitySpec, lam: float, umax: float, npts: int = 10_000) -> bool:
    """True when f(t) >= lam*t on a dense grid over the solution range (0, umax]."""
    t = np.linspace(umax / npts, umax, npts)
    return bool(np.all(f.f(t) >= lam * t - 1e-12 * max(1.0, lam * umax)))


# -- semilinear Newton solve ------------------------------------------------------


def solve_semilinear(
    mesh: Mesh,
    f: NonlinearitySpec,
    u0: ScalarField,
    tol: float = 1e-10,
    max_newton: int = 60,
) -> ScalarField:
    """Damped Newton for the discrete residual M f(u) - K u with u = 0 on the
    boundary; returns a nonnegative field or raises NonPositiveSolution."""
    k, m = assemble(mesh)
    mask = dirichlet_mask(mesh)
    interior = np.nonzero(~mask)[0]
    ki = k.mat[interior][:, interior].tocsc()
    mi = m.mat[interior][:, interior].tocsc()

    u = mesh.reduce(u0.values)
    u[mask] = 0.0
    ui = u[interior]

    def residual(ui_: np.ndarray) -> np.ndarray:
        return mi @ f.f(ui_) - ki @ ui_

    r = residual(ui)
    hist: list[float] = [float(np.linalg.norm(r))]
    for _ in range(max_newton):
        if float(np.max(np.abs(r))) <= tol * (1.0 + float(np.max(np.abs(ui), initial=0.0))):
            break
        jac = (mi @ sparse.diags(f.fprime(ui)) - ki).tocsc()
        delta = splu(jac).solve(-r)
        # Armijo backtracking, factor 1/2, at most 10 halvings
        t = 1.0
        base = float(np.linalg.norm(r))
        accepted = False
        for _ in range(11):
            trial = ui + t * delta
            r_trial = residual(trial)
            if float(np.linalg.norm(r_trial)) <= (1.0 - 1e-4 * t) * base:
                ui, r = trial, r_trial
                accepted = True
                break
            t *= 0.5
        if not accepted:
            raise NewtonDiverged("line search exhausted 10 halvings without descent")
        hist.append(float(np.linalg.norm(r)))
        if len(hist) > 10 and hist[-1] > 0.9 * hist[-11] and hist[-1] > tol:
            raise NewtonDiverged(
                f"residual not reduced by 0.9 over 10 damped steps ({hist[-11]:.3e} -> {hist[-1]:.3e})"
            )
    else:
        raise NewtonDiverged(f"no convergence in {max_newton} Newton steps")

    full = np.zeros(mesh.n_dofs)
    full[interior] = ui
    if float(np.min(full)) < -1e-8:
        raise NonPositiveSolution(f"solution dips to {float(np.min(full)):.3e}")
    return ScalarField(mesh, mesh.expand(full))


# -- variational Neumann trace ------------------------------------------------------


@dataclass
class NeumannTrace:
    """Outward normal derivative along the boundary.

    ``nodal`` holds one flux value per boundary vertex (walk order per loop,
    concatenated as in ``vertex_ids``); ``per_edge`` averages the two
    endpoint values of each boundary edge, aligned with mesh.boundary_edges.
    """

    vertex_ids: np.ndarray
    nodal: np.ndarray
    per_edge: np.ndarray
    edge_lengths: np.ndarray
    loop_slices: list[slice] = field(default_factory=list)

    def value_at_vertex(self, vertex_id: int) -> float:
        return float(self.nodal[self._index[int(vertex_id)]])

    def __post_init__(self) -> None:
        self._index = {int(v): i for i, v in enumerate(self.vertex_ids)}


def boundary_mass_matrix(mesh: Mesh, boundary_dofs: np.ndarray) -> sparse.csr_matrix:
    """1D P1 mass matrix over the boundary loops (periodic loops close)."""
    pos = {int(d): i for i, d in enumerate(boundary_dofs)}
    nb = len(boundary_dofs)
    rows, cols, vals = [], [], []
    for e, (a, b) in enumerate(mesh.boundary_edges):
        length = mesh.boundary_lengths[e]
        ia = pos[int(mesh.dof_of_vertex[a])]
        ib = pos[int(mesh.dof_of_vertex[b])]
        rows += [ia, ib, ia, ib]
        cols += [ia, ib, ib, ia]
        vals += [length / 3.0, length / 3.0, length / 6.0, length / 6.0]
    return sparse.coo_matrix((vals, (rows, cols)), shape=(nb, nb)).tocsr()


def neumann_trace(mesh: Mesh, u: ScalarField, source: np.ndarray | None = None) -> NeumannTrace:
    """Variational boundary flux: solve M_b g = (K u - M s) on boundary rows,
    where s holds the per-vertex reaction values f(u) (None for pure Laplace)."""
    k, m = assemble(mesh)
    ured = mesh.reduce(u.values)
    rhs_full = k.mat @ ured
    if source is not None:
        rhs_full = rhs_full - m.mat @ mesh.reduce(np.asarray(source, dtype=float))

    # walk-ordered boundary vertices (concatenated loops)
    ids = np.concatenate([mesh.loop_vertex_ids(i) for i in range(len(mesh.boundary_loops))])
    slices = []
    off = 0
    for i in range(len(mesh.boundary_loops)):
        n = len(mesh.boundary_loops[i])
        slices.append(slice(off, off + n))
        off += n
    dofs = mesh.dof_of_vertex[ids]
    mb = boundary_mass_matrix(mesh, dofs)
    g = splu(mb.tocsc()).solve(rhs_full[dofs])

    nodal_by_dof = {int(d): g[i] for i, d in enumerate(dofs)}
    per_edge = np.array(
        [
            0.5
            * (
                nodal_by_dof[int(mesh.dof_of_vertex[a])]
                + nodal_by_dof[int(mesh.dof_of_vertex[b])]
            )
            for a, b in mesh.boundary_edges
        ]
    )
    return NeumannTrace(
        vertex_ids=ids,
        nodal=g,
        per_edge=per_edge,
        edge_lengths=mesh.boundary_lengths.copy(),
        loop_slices=slices,
    )
