"""Shape optimization toward constant-flux domains.

Two routes to extremality: a steepest-descent flow of the first Dirichlet
eigenvalue at fixed area (boundary vertices move along their normals with
velocity (du/dn)^2 minus its mean, which is the area-preserving descent
direction), and pseudo-arclength continuation of constant-flux periodic
strips in Fourier half-width space, starting from the straight strip at the
period where its flux linearization changes sign.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import fem
from .errors import (
    InvalidSpec,
    MeshQualityFailure,
    MeshTangled,
    NewtonDiverged,
    NoSignChange,
    StagnatedFlow,
    TruncationInsufficient,
)
from .geom2d.domain import DomainSpec, PeriodicStrip, Polygon
from .geom2d.meshing import Mesh, build_domain, structured_strip

# -- eigenvalue shape derivative ----------------------------------------------------


def shape_derivative(mesh: Mesh, eigenpair: fem.EigenPair) -> tuple[np.ndarray, np.ndarray]:
    """Steepest-descent normal velocity for lambda1 at fixed area.

    Returns (vertex_ids, velocity): per boundary vertex, the squared flux of
    the mass-normalized eigenfunction minus its length-weighted mean, so the
    weighted mean of the output is zero (area preserved to first order).
    Positive velocity moves the boundary outward.
    """
    tr = fem.neumann_trace(mesh, eigenpair.u1, source=eigenpair.lambda1 * eigenpair.u1.values)
    q2 = tr.nodal**2
    weights = _lumped_boundary_weights(mesh, tr)
    mean = float((q2 * weights).sum() / weights.sum())
    return tr.vertex_ids, q2 - mean


def _lumped_boundary_weights(mesh: Mesh, tr: fem.NeumannTrace) -> np.ndarray:
    w = np.zeros(len(tr.vertex_ids))
    idx = {int(v): i for i, v in enumerate(tr.vertex_ids)}
    dof_idx = {int(mesh.dof_of_vertex[v]): i for v, i in idx.items()}
    for e, (a, b) in enumerate(mesh.boundary_edges):
        half = 0.5 * mesh.boundary_lengths[e]
        w[dof_idx[int(mesh.dof_of_vertex[a])]] += half
        w[dof_idx[int(mesh.dof_of_vertex[b])]] += half
    return w


# -- descent flow --------------------------------------------------------------------


@dataclass
class FlowState:
    step: int
    spec: Polygon
    area: float
    lambda1: float
    spread: float
    step_size: float


@dataclass
class FlowResult:
    states: list[FlowState]
    reason: str

    @property
    def final(self) -> FlowState:
        return self.states[-1]


def _resample_closed(pts: np.ndarray, n: int) -> np.ndarray:
    closed = np.vstack([pts, pts[:1]])
    seg = np.hypot(*np.diff(closed, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    t = s[-1] * np.arange(n) / n
    x = np.interp(t, s, closed[:, 0])
    y = np.interp(t, s, closed[:, 1])
    return np.column_stack([x, y])


def _polygon_area_centroid(pts: np.ndarray) -> tuple[float, np.ndarray]:
    x, y = pts[:, 0], pts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * float(cross.sum())
    cx = float(((x + xn) * cross).sum() / (6.0 * area))
    cy = float(((y + yn) * cross).sum() / (6.0 * area))
    return area, np.array([cx, cy])


def _self_intersects(pts: np.ndarray) -> bool:
    n = len(pts)
    a = pts
    b = np.roll(pts, -1, axis=0)
    for i in range(n):
        d1 = b[i] - a[i]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            d2 = b[j] - a[j]
            r = a[j] - a[i]
            den = d1[0] * d2[1] - d1[1] * d2[0]
            if abs(den) < 1e-30:
                continue
            t = (r[0] * d2[1] - r[1] * d2[0]) / den
            s = (r[0] * d1[1] - r[1] * d1[0]) / den
            if 1e-12 < t < 1 - 1e-12 and 1e-12 < s < 1 - 1e-12:
                return True
    return False


def _vertex_normals(pts: np.ndarray) -> np.ndarray:
    # CCW polygon: outward normal is the right-hand rotation of the tangent
    tang = np.roll(pts, -1, axis=0) - np.roll(pts, 1, axis=0)
    tang /= np.hypot(tang[:, 0], tang[:, 1])[:, None]
    return np.column_stack([tang[:, 1], -tang[:, 0]])


def _fourier_filter(v: np.ndarray, max_mode: int) -> np.ndarray:
    spec = np.fft.rfft(v)
    spec[max_mode + 1 :] = 0.0
    return np.fft.irfft(spec, n=len(v))


def _boundary_points(spec: DomainSpec, n: int) -> np.ndarray:
    loops = spec.boundary_loops(_perimeter(spec) / (4 * n))
    if len(loops) != 1:
        raise InvalidSpec("the descent flow needs a single-loop domain")
    return _resample_closed(loops[0].points, n)


@dataclass
class _FlowEval:
    pts: np.ndarray
    mesh: Mesh
    eigen: fem.EigenPair
    spread: float
    alpha: float


def _evaluate(pts: np.ndarray, h: float) -> _FlowEval:
    mesh = build_domain(Polygon(tuple(map(tuple, pts))), h)
    k, m = fem.assemble(mesh)
    ep = fem.eigen_smallest(k, m, fem.dirichlet_mask(mesh), mesh)
    tr = fem.neumann_trace(mesh, ep.u1, source=ep.lambda1 * ep.u1.values)
    w = tr.edge_lengths
    mean = float((tr.per_edge * w).sum() / w.sum())
    spread = math.sqrt(float((((tr.per_edge - mean) ** 2) * w).sum() / w.sum())) / abs(mean)
    return _FlowEval(pts=pts, mesh=mesh, eigen=ep, spread=spread, alpha=mean)


def flow_to_extremal(
    spec0: DomainSpec,
    h: float,
    max_steps: int,
    spread_tol: float = 1e-3,
    move_cap: float = 0.25,
    filter_modes: int = 32,
) -> FlowResult:
    """Evolve the boundary toward constant flux at fixed area.

    Explicit Euler steps on the polygon vertices with Fourier-filtered
    velocity; every trial step is remeshed, rescaled to the initial area, and
    accepted only if lambda1 does not increase.  Terminates on the spread
    tolerance, boundary stagnation, or max_steps.
    """
    spec0.validate()
    area0 = spec0.area()
    n = max(64, int(round(_perimeter(spec0) / h)))
    pts = _boundary_points(spec0, n)
    pts = _rescale(pts, area0)

    cur = _evaluate(pts, h)
    states = [
        FlowState(0, _poly(cur.pts), area0, cur.eigen.lambda1, cur.spread, 0.0)
    ]
    reason = "max_steps"
    for step in range(1, max_steps + 1):
        if cur.spread < spread_tol:
            reason = "converged"
            break
        ids, vel = shape_derivative(cur.mesh, cur.eigen)
        v = np.empty(n)
        v[ids] = vel  # boundary vertex ids are the polygon indices
        v = _fourier_filter(v, filter_modes)
        normals = _vertex_normals(cur.pts)
        vmax = float(np.max(np.abs(v)))
        if vmax == 0.0:
            reason = "converged"
            break
        dt = move_cap * h / vmax
        accepted = None
        for _ in range(8):
            trial = cur.pts + dt * v[:, None] * normals
            trial = _resample_closed(trial, n)
            trial = _rescale(trial, area0)
            if _self_intersects(trial):
                raise_tangled = True
            else:
                raise_tangled = False
                try:
                    cand = _evaluate(trial, h)
                except (MeshQualityFailure, InvalidSpec):
                    dt *= 0.5
                    continue
                if cand.eigen.lambda1 <= cur.eigen.lambda1 * (1.0 + 1e-12):
                    accepted = cand
                    break
            dt *= 0.5
        else:
            if raise_tangled:
                raise MeshTangled("boundary self-intersected at every retried step size")
            if len(states) == 1:
                # nothing ever moved: genuine failure rather than a plateau
                raise StagnatedFlow(
                    f"no descent step accepted at step {step} (spread {cur.spread:.3e})"
                )
            reason = "stagnated"
            break
        cur = accepted
        states.append(
            FlowState(step, _poly(cur.pts), area0, cur.eigen.lambda1, cur.spread, dt)
        )
    return FlowResult(states=states, reason=reason)


def _poly(pts: np.ndarray) -> Polygon:
    return Polygon(tuple(map(tuple, pts)))


def _rescale(pts: np.ndarray, target_area: float) -> np.ndarray:
    area, cent = _polygon_area_centroid(pts)
    return cent + (pts - cent) * math.sqrt(target_area / area)


def _perimeter(spec: DomainSpec) -> float:
    loops = spec.boundary_loops(spec.characteristic_size() / 64)
    total = 0.0
    for lp in loops:
        closed = np.vstack([lp.points, lp.points[:1]])
        total += float(np.hypot(*np.diff(closed, axis=0).T).sum())
    return total


# -- bifurcation period of the straight strip -----------------------------------------


def _strip_flux_modes(
    lam: float, T: float, coeffs: tuple[float, ...], nx: int, ny: int, n_modes: int
) -> dict:
    """Eigen-solve one period cell and project the wall flux onto cosines.

    Returns the mean flux, the first cosine coefficients of its deviation
    along the top wall, and solve diagnostics.
    """
    spec = PeriodicStrip(T, coeffs)
    mesh = structured_strip(spec, nx, ny)
    k, m = fem.assemble(mesh)
    ep = fem.eigen_smallest(
        k, m, fem.dirichlet_mask(mesh), mesh, tol=1e-11, shift=0.98 * lam
    )
    tr = fem.neumann_trace(mesh, ep.u1, source=ep.lambda1 * ep.u1.values)
    w = tr.edge_lengths
    mean = float((tr.per_edge * w).sum() / w.sum())
    spread = math.sqrt(float((((tr.per_edge - mean) ** 2) * w).sum() / w.sum())) / abs(mean)

    # top wall nodal flux on the uniform column grid
    ids = tr.vertex_ids
    ys = mesh.vertices[ids, 1]
    top = ys > 0
    xs = mesh.vertices[ids[top], 0]
    g = tr.nodal[top]
    order = np.argsort(xs)
    xs, g = xs[order], g[order]
    dev = g - g.mean()
    coeffs_out = np.array(
        [2.0 * float(np.mean(dev * np.cos(2 * math.pi * k_ * xs / T))) for k_ in range(1, n_modes + 1)]
    )
    return {
        "mean": mean,
        "dev_coeffs": coeffs_out,
        "lambda1": ep.lambda1,
        "spread": spread,
        "mesh": mesh,
        "eigen": ep,
        "trace": tr,
    }


def _strip_counts(lam: float, T: float, resolution: int) -> tuple[int, int]:
    a = math.pi / (2.0 * math.sqrt(lam))
    hy = a / resolution
    h = min(hy, T / 8.0)
    nx = max(8, int(round(T / h)))
    ny = 2 * max(2, int(round(a / h)))
    return nx, ny


def bifurcation_mu(lam: float, T: float, resolution: int = 12, eps_rel: float = 1e-5) -> float:
    """Linearized flux deviation per unit cos(2 pi x / T) wall perturbation.

    Finite difference of the Dirichlet eigen-solve at relative amplitudes
    eps_rel and 2*eps_rel, Richardson-extrapolated.  The straight strip's own
    deviation is subtracted, so structured-mesh discretization error cancels.
    """
    a = math.pi / (2.0 * math.sqrt(lam))
    nx, ny = _strip_counts(lam, T, resolution)
    base = _strip_flux_modes(lam, T, (a,), nx, ny, 1)
    eps = eps_rel * a
    c1 = _strip_flux_modes(lam, T, (a, eps), nx, ny, 1)["dev_coeffs"][0]
    c2 = _strip_flux_modes(lam, T, (a, 2 * eps), nx, ny, 1)["dev_coeffs"][0]
    c0 = base["dev_coeffs"][0]
    mu1 = (c1 - c0) / eps
    mu2 = (c2 - c0) / (2 * eps)
    return 2.0 * mu1 - mu2


def bifurcation_period(
    lam: float,
    resolution: int = 12,
    scan_points: int = 48,
    rel_tol: float = 1e-6,
) -> float:
    """Period at which the straight strip's flux linearization changes sign,
    located by a scan over [0.1, 50]/sqrt(lam) and bisection."""
    if lam <= 0:
        raise InvalidSpec("lambda must be positive")
    s = math.sqrt(lam)
    ts = np.linspace(0.1 / s, 50.0 / s, scan_points)
    mus = [bifurcation_mu(lam, float(t), resolution) for t in ts]
    bracket = None
    for i in range(len(ts) - 1):
        if mus[i] == 0.0:
            return float(ts[i])
        if mus[i] * mus[i + 1] < 0:
            bracket = (float(ts[i]), float(ts[i + 1]), mus[i])
            break
    if bracket is None:
        raise NoSignChange("no sign change of the flux linearization on the scanned periods")
    lo, hi, flo = bracket
    while (hi - lo) > rel_tol * 0.5 * (hi + lo):
        mid = 0.5 * (lo + hi)
        fmid = bifurcation_mu(lam, mid, resolution)
        if fmid == 0.0:
            return mid
        if flo * fmid < 0:
            hi = mid
        else:
            lo, flo = mid, fmid
    return 0.5 * (lo + hi)


# -- branch continuation ----------------------------------------------------------------


@dataclass
class BranchPoint:
    """One accepted point on the constant-flux periodic-strip branch."""

    period: float
    s: float
    coeffs: tuple[float, ...]
    lam: float
    alpha_hat: float
    spread: float
    max_u: float
    lambda1: float
    converged: bool
    mesh: Mesh = field(repr=False, default=None)
    u: fem.ScalarField = field(repr=False, default=None)


def _branch_residual(
    z: np.ndarray, lam: float, n_modes: int, nx: int, ny: int, area0: float
) -> tuple[np.ndarray, dict]:
    c = tuple(z[: n_modes + 1])
    T = float(z[n_modes + 1])
    alpha = float(z[n_modes + 2])
    if T <= 0 or c[0] <= 0:
        raise NewtonDiverged("left the parameter domain (T or c0 nonpositive)")
    out = _strip_flux_modes(lam, T, c, nx, ny, n_modes)
    f = np.empty(n_modes + 2)
    f[0] = out["mean"] - alpha  # mode 0 pins the flux level
    f[1 : n_modes + 1] = out["dev_coeffs"]  # modes 1..N of the deviation vanish
    f[n_modes + 1] = 2.0 * c[0] * T - area0
    return f, out


def _branch_newton(
    z_pred: np.ndarray,
    z_prev: np.ndarray,
    tangent: np.ndarray,
    ds: float,
    lam: float,
    n_modes: int,
    nx: int,
    ny: int,
    area0: float,
    tol: float = 1e-11,
    max_iter: int = 12,
) -> tuple[np.ndarray, dict]:
    z = z_pred.copy()
    m = n_modes + 3

    def full_residual(zz):
        f, out = _branch_residual(zz, lam, n_modes, nx, ny, area0)
        g = np.empty(m)
        g[: m - 1] = f
        g[m - 1] = float(tangent @ (zz - z_prev)) - ds
        return g, out

    g, out = full_residual(z)
    for _ in range(max_iter):
        if float(np.max(np.abs(g))) <= tol:
            return z, out
        jac = np.empty((m, m))
        for j in range(m):
            step = 1e-7 * max(1.0, abs(float(z[j])))
            zp = z.copy()
            zp[j] += step
            gp, _ = full_residual(zp)
            jac[:, j] = (gp - g) / step
        try:
            delta = np.linalg.solve(jac, -g)
        except np.linalg.LinAlgError as exc:
            raise NewtonDiverged(f"singular continuation Jacobian: {exc}") from exc
        damp = 1.0
        base = float(np.linalg.norm(g))
        for _ in range(8):
            g_new, out_new = full_residual(z + damp * delta)
            if float(np.linalg.norm(g_new)) < base:
                z = z + damp * delta
                g, out = g_new, out_new
                break
            damp *= 0.5
        else:
            raise NewtonDiverged("continuation line search failed")
    if float(np.max(np.abs(g))) <= 100 * tol:
        return z, out
    raise NewtonDiverged(f"corrector stalled at |g| = {float(np.max(np.abs(g))):.3e}")


def continue_branch(
    lam: float,
    T0: float,
    s_max: float,
    ds: float,
    n_modes: int = 10,
    resolution: int = 16,
    spread_limit: float = 1e-6,
    decay_limit: float = 1e-8,
    max_points: int = 64,
) -> list[BranchPoint]:
    """Pseudo-arclength continuation of constant-flux periodic strips.

    Unknowns: half-width cosine coefficients c_0..c_N, the period, and the
    flux level; equations: the first N+1 cosine modes of the flux deviation
    vanish, the cell area stays fixed, plus the arclength constraint.  The
    branch parameter is s = c_1.  Accepted points must meet the spread and
    coefficient-decay limits.
    """
    if n_modes < 8:
        raise InvalidSpec("Fourier truncation needs at least 8 modes")
    a = math.pi / (2.0 * math.sqrt(lam))
    nx, ny = _strip_counts(lam, T0, resolution)
    area0 = 2.0 * a * T0

    # straight-strip start: alpha from the discrete solve so the mode-0
    # equation is satisfied exactly at s = 0
    base = _strip_flux_modes(lam, T0, (a,), nx, ny, n_modes)
    z = np.zeros(n_modes + 3)
    z[0] = a
    z[n_modes + 1] = T0
    z[n_modes + 2] = base["mean"]

    points = [
        BranchPoint(
            period=T0,
            s=0.0,
            coeffs=tuple(z[: n_modes + 1]),
            lam=lam,
            alpha_hat=base["mean"],
            spread=base["spread"],
            max_u=float(base["eigen"].u1.values.max()),
            lambda1=base["lambda1"],
            converged=True,
            mesh=base["mesh"],
            u=base["eigen"].u1,
        )
    ]

    # the sign of ds picks the pitchfork side; arclength steps stay positive
    # and the (secant) tangent carries the direction from then on
    tangent = np.zeros(n_modes + 3)
    tangent[1] = math.copysign(1.0, ds)
    z_prev = z
    step = abs(ds)
    while len(points) < max_points and abs(float(z_prev[1])) < s_max:
        z_pred = z_prev + step * tangent
        try:
            z_new, out = _branch_newton(
                z_pred, z_prev, tangent, step, lam, n_modes, nx, ny, area0
            )
        except NewtonDiverged:
            step *= 0.5
            if abs(step) < 1e-4 * abs(ds):
                break
            continue
        spread = out["spread"]
        c = z_new[: n_modes + 1]
        if abs(float(c[n_modes])) > decay_limit * max(abs(float(c[1])), 1e-300):
            raise TruncationInsufficient(
                f"|c_N| = {abs(float(c[n_modes])):.3e} vs |c_1| = {abs(float(c[1])):.3e}"
            )
        points.append(
            BranchPoint(
                period=float(z_new[n_modes + 1]),
                s=float(z_new[1]),
                coeffs=tuple(c),
                lam=lam,
                alpha_hat=float(z_new[n_modes + 2]),
                spread=spread,
                max_u=float(out["eigen"].u1.values.max()),
                lambda1=out["lambda1"],
                converged=bool(spread <= spread_limit),
                mesh=out["mesh"],
                u=out["eigen"].u1,
            )
        )
        new_tan = z_new - z_prev
        norm = float(np.linalg.norm(new_tan))
        if norm > 0:
            tangent = new_tan / norm
        z_prev = z_new
    return points
