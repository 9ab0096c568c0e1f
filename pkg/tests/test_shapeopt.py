import math

import numpy as np
import pytest

from extremal_lab import analytic, fem, shapeopt
from extremal_lab.geom2d import Disk, Ellipse, Polygon, boundary_geometry, build_domain
from extremal_lab.geom2d.meshing import mesh_from_arrays

J01SQ = 5.783185962946785


@pytest.fixture(scope="module")
def disk_eigen(disk_mesh_h05):
    k, m = fem.assemble(disk_mesh_h05)
    return fem.eigen_smallest(k, m, fem.dirichlet_mask(disk_mesh_h05), disk_mesh_h05)


# -- shape derivative ------------------------------------------------------------


def test_disk_velocity_near_zero_and_mean_free(disk_mesh_h05, disk_eigen):
    ids, vel = shapeopt.shape_derivative(disk_mesh_h05, disk_eigen)
    tr = fem.neumann_trace(
        disk_mesh_h05, disk_eigen.u1, source=disk_eigen.lambda1 * disk_eigen.u1.values
    )
    w = shapeopt._lumped_boundary_weights(disk_mesh_h05, tr)
    q2_mean = float((tr.nodal**2 * w).sum() / w.sum())
    # the disk is critical: the velocity is zero at the trace-noise level
    assert float(np.abs(vel).max()) <= 0.05 * q2_mean
    assert abs(float((vel * w).sum())) / float(w.sum()) <= 1e-12


def test_ellipse_velocity_signs():
    mesh = build_domain(Ellipse(2.0, 1.0), 0.05)
    k, m = fem.assemble(mesh)
    ep = fem.eigen_smallest(k, m, fem.dirichlet_mask(mesh), mesh)
    ids, vel = shapeopt.shape_derivative(mesh, ep)
    pts = mesh.vertices[ids]
    at_y_tip = np.abs(pts[:, 1]) > 0.95
    at_x_tip = np.abs(pts[:, 0]) > 1.9
    # flux is strongest across the short axis: grow there, retract the tips
    assert np.all(vel[at_y_tip] > 0)
    assert np.all(vel[at_x_tip] < 0)


def test_shape_derivative_against_morph_fd():
    # morphing the mesh keeps connectivity, so discretization error cancels
    # in the eigenvalue difference; cos(2 theta) is compatible with the
    # ellipse's mirror symmetries (odd modes integrate to zero)
    spec = Ellipse(1.4, 1 / 1.4)
    mesh = build_domain(spec, 0.05)
    k, m = fem.assemble(mesh)
    ep = fem.eigen_smallest(k, m, fem.dirichlet_mask(mesh), mesh)
    tr = fem.neumann_trace(mesh, ep.u1, source=ep.lambda1 * ep.u1.values)
    w = shapeopt._lumped_boundary_weights(mesh, tr)
    th = np.arctan2(mesh.vertices[:, 1], mesh.vertices[:, 0])
    eps = 1e-3

    def lam_of(verts):
        m2 = mesh_from_arrays(verts, mesh.triangles, quality_floor=None)
        k2, mm2 = fem.assemble(m2)
        return fem.eigen_smallest(k2, mm2, fem.dirichlet_mask(m2), m2).lambda1

    lam_p = lam_of(mesh.vertices * (1 + eps * np.cos(2 * th))[:, None])
    lam_m = lam_of(mesh.vertices * (1 - eps * np.cos(2 * th))[:, None])
    fd = (lam_p - lam_m) / 2.0

    bg = boundary_geometry(mesh)
    ids = tr.vertex_ids
    nu = np.array([bg.normal[bg.index_of(int(v))] for v in ids])
    disp = mesh.vertices[ids] * (eps * np.cos(2 * th[ids]))[:, None]
    v_normal = np.einsum("ij,ij->i", disp, nu)
    predicted = -float((tr.nodal**2 * v_normal * w).sum())
    assert fd == pytest.approx(predicted, rel=0.05)


# -- descent flow ----------------------------------------------------------------


def test_disk_flow_terminates_immediately():
    res = shapeopt.flow_to_extremal(Disk(1.0), h=0.05, max_steps=50)
    assert res.reason == "converged"
    assert len(res.states) == 1
    assert res.final.spread < 1e-3


@pytest.mark.slow
def test_ellipse_flow_reaches_disk():
    res = shapeopt.flow_to_extremal(Ellipse(1.2, 1 / 1.2), h=0.05, max_steps=300)
    assert len(res.states) - 1 <= 300
    lams = [s.lambda1 for s in res.states]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(lams, lams[1:]))
    areas = [s.area for s in res.states]
    assert max(abs(a - math.pi) / math.pi for a in areas) <= 1e-3
    pts = np.asarray(res.final.spec.vertices)
    area, cent = shapeopt._polygon_area_centroid(pts)
    assert abs(area - math.pi) / math.pi <= 1e-3
    assert float(np.abs(np.hypot(*(pts - cent).T) - 1.0).max()) <= 0.01
    assert abs(res.final.lambda1 - J01SQ) / J01SQ <= 0.005


@pytest.mark.slow
def test_square_flow_decreases_lambda():
    side = math.sqrt(math.pi)
    square = Polygon(((0, 0), (side, 0), (side, side), (0, side)))
    res = shapeopt.flow_to_extremal(square, h=0.06, max_steps=40)
    lams = [s.lambda1 for s in res.states]
    assert lams[0] == pytest.approx(2 * math.pi**2 / math.pi, rel=0.01)  # 2*pi
    assert all(b <= a * (1 + 1e-12) for a, b in zip(lams, lams[1:]))
    assert lams[-1] < lams[0] - 0.05 * (lams[0] - J01SQ)


# -- bifurcation periods ------------------------------------------------------------


def test_straight_strip_spread_is_tiny():
    lam = 1.0
    out = shapeopt._strip_flux_modes(
        lam, 6.0, (math.pi / 2,), *shapeopt._strip_counts(lam, 6.0, 12), 4
    )
    assert out["spread"] < 1e-10


def test_mu_sign_change_brackets_two_pi():
    assert shapeopt.bifurcation_mu(1.0, 5.5) > 0
    assert shapeopt.bifurcation_mu(1.0, 7.0) < 0


@pytest.mark.slow
def test_mu_has_exactly_one_sign_change():
    # dense scan over the searched period window
    ts = np.linspace(0.6, 40.0, 200)
    mus = np.array([shapeopt.bifurcation_mu(1.0, float(t), resolution=6) for t in ts])
    signs = np.sign(mus)
    changes = int(np.sum(signs[1:] * signs[:-1] < 0))
    assert changes == 1


@pytest.mark.slow
def test_bifurcation_period_scaling_law():
    t1 = shapeopt.bifurcation_period(1.0)
    t4 = shapeopt.bifurcation_period(4.0)
    assert abs(t4 - t1 / 2) / (t1 / 2) <= 1e-4
    # the numerical zero sits at the separable-mode crossover 2*pi/sqrt(lam)
    assert t1 == pytest.approx(2 * math.pi, rel=1e-3)


# -- branch continuation --------------------------------------------------------------


@pytest.fixture(scope="module")
def branch_points():
    return shapeopt.continue_branch(1.0, 2 * math.pi, s_max=0.055, ds=0.005)


@pytest.mark.slow
def test_branch_starts_at_straight_strip(branch_points):
    p0 = branch_points[0]
    assert p0.s == 0.0
    assert p0.spread < 1e-10
    ss = analytic.strip_solution(1.0, p0.alpha_hat)
    assert p0.max_u == pytest.approx(ss.max_value, rel=1e-4)


@pytest.mark.slow
def test_branch_accepts_points_with_tiny_spread(branch_points):
    nontrivial = [p for p in branch_points[1:] if abs(p.s) > 1e-6]
    assert len(nontrivial) >= 10
    for p in nontrivial:
        assert p.converged
        assert p.spread <= 1e-6
        assert abs(p.coeffs[-1]) <= 1e-8 * abs(p.coeffs[1])
        assert p.s == pytest.approx(p.coeffs[1], abs=1e-12)
        # cell area is pinned along the branch: 2 * (pi/2) * (2 pi)
        assert 2 * p.coeffs[0] * p.period == pytest.approx(2 * math.pi**2, rel=1e-10)


@pytest.mark.slow
def test_branch_max_u_exceeds_strip_threshold(branch_points):
    for p in branch_points[1:]:
        assert p.max_u >= abs(p.alpha_hat) / math.sqrt(p.lam) - 1e-4


@pytest.mark.slow
def test_branch_pitchfork_symmetry(branch_points):
    mirror = shapeopt.continue_branch(1.0, 2 * math.pi, s_max=0.02, ds=-0.005)
    assert len(mirror) >= 3
    for p_neg in mirror[1:4]:
        p_pos = min(branch_points[1:], key=lambda p: abs(p.s + p_neg.s))
        assert abs(p_pos.s + p_neg.s) < 1e-8
        assert p_neg.alpha_hat == pytest.approx(p_pos.alpha_hat, abs=1e-8)
        assert p_neg.lambda1 == pytest.approx(p_pos.lambda1, abs=1e-8)
        assert p_neg.max_u == pytest.approx(p_pos.max_u, abs=1e-8)
