import math

import numpy as np
import pytest

from bundlecalc import geometry as G
from bundlecalc.errors import CapabilityError, DegeneracyError, DomainError
from bundlecalc.jets import Jet

from conftest import central_diff

CATALOG = [G.flat_torus(2), G.flat_torus(3), G.warped_torus2(), G.sphere_chart(),
           G.interval("1 + x^2"), G.annulus()]


def const_matrix(m):
    return Jet.constant(np.asarray(m, dtype=float)[None], 1, 2)


# metric_jet -------------------------------------------------------------------------

def test_flat_torus_metric_is_identity_with_zero_partials():
    g = G.metric_jet(G.flat_torus(2), [0.3, 0.7], 2)
    assert np.array_equal(g.value[0], np.eye(2))
    assert not g.coeffs[..., 1:].any()


def test_interval_even_metric_at_origin():
    g = G.metric_jet(G.interval("1 + x^2"), [0.0], 1)
    assert g.value[0, 0, 0] == 1.0
    assert g.partial((1,))[0, 0, 0] == 0.0


def test_warped_torus_metric_by_hand():
    g = G.metric_jet(G.warped_torus2(), [math.pi / 2, 0.0], 1)
    assert np.allclose(g.value[0], np.diag([1.5, 1.5]), atol=1e-15)
    assert abs(g.partial((1, 0))[0, 0, 0]) <= 1e-15


def test_points_off_the_chart_are_rejected():
    with pytest.raises(DomainError):
        G.metric_jet(G.sphere_chart(), [0.1, 1.0], 0)


def test_metric_order_beyond_max_is_capability_error():
    with pytest.raises(CapabilityError):
        G.metric_jet(G.flat_torus(2), [0.1, 0.1], 5)


# inverse / density ------------------------------------------------------------------

def test_inverse_metric_examples():
    inv = G.inverse_metric_jet(const_matrix(np.eye(2)))
    assert np.array_equal(inv.value[0], np.eye(2))
    inv = G.inverse_metric_jet(const_matrix(np.diag([2.0, 2.0])))
    assert np.allclose(inv.value[0], np.diag([0.5, 0.5]))
    S = G.sphere_chart()
    g = G.metric_jet(S, [math.pi / 2, 1.0], 1)
    inv = G.inverse_metric_jet(g)
    assert np.allclose(inv.value[0], np.eye(2), atol=1e-15)
    assert abs(inv.partial((1, 0))[0, 1, 1]) <= 1e-14     # -2 cos / sin^3 at pi/2


def test_inverse_metric_of_singular_matrix():
    with pytest.raises(DegeneracyError):
        G.inverse_metric_jet(const_matrix(np.zeros((2, 2))), np.array([[0.0, 0.0]]))


def test_sqrt_det_examples():
    assert G.sqrt_det_jet(const_matrix(np.eye(2))).value[0] == 1.0
    assert G.sqrt_det_jet(const_matrix(np.diag([4.0, 9.0]))).value[0] == pytest.approx(6.0)
    g = G.metric_jet(G.sphere_chart(), [math.pi / 3, 0.0], 1)
    assert G.sqrt_det_jet(g).value[0] == pytest.approx(math.sqrt(3) / 2, rel=1e-15)


def test_sqrt_det_rejects_nonpositive_determinant():
    with pytest.raises(DegeneracyError):
        G.sqrt_det_jet(const_matrix(np.diag([1.0, -1.0])))


# Christoffel / curvature -----------------------------------------------------------------

def test_flat_christoffels_vanish():
    gam = G.christoffel_jet(G.flat_torus(2), [0.4, 0.4], 2)
    assert not gam.coeffs.any()


def test_sphere_christoffels():
    gam = G.christoffel_jet(G.sphere_chart(), [math.pi / 4, 0.5], 0).value[0]
    assert gam[0, 1, 1] == pytest.approx(-0.5, abs=1e-15)       # Gamma^theta_phiphi
    assert gam[1, 0, 1] == pytest.approx(1.0, abs=1e-15)        # Gamma^phi_thetaphi
    assert gam[1, 1, 0] == pytest.approx(1.0, abs=1e-15)


def test_exponential_line_christoffel():
    M = G.custom_chart([(0.0, 1.0)], [False], {(0, 0): "exp(2*x)"}, ("x",))
    assert G.christoffel_jet(M, [0.37], 0).value[0, 0, 0, 0] == pytest.approx(1.0, rel=1e-14)


def test_christoffel_order_needs_metric_headroom():
    with pytest.raises(CapabilityError, match="order 5"):
        G.christoffel_jet(G.sphere_chart(), [1.0, 1.0], 4)


def test_sphere_ricci_equals_metric():
    theta = math.pi / 3
    cd = G.curvature(G.sphere_chart(), [theta, 0.2])
    assert np.allclose(cd.ricci[0], np.diag([1.0, math.sin(theta) ** 2]), atol=1e-10)


def test_one_dimensional_riemann_vanishes():
    cd = G.curvature(G.interval("1 + x^2"), [[0.2], [0.7]])
    assert not np.abs(cd.riemann).max() > 1e-14


@pytest.mark.parametrize("M", [G.flat_torus(2), G.flat_torus(3), G.warped_torus2()],
                         ids=lambda M: M.label)
def test_flat_chart_curvature_vanishes_at_100_points(M):
    cd = G.curvature(M, M.sample_points(100, seed=1))
    assert np.abs(cd.riemann).max() <= 1e-12


@pytest.mark.parametrize("M", CATALOG, ids=lambda M: M.label)
def test_riemann_antisymmetry(M):
    R = G.curvature(M, M.sample_points(30, seed=2, margin=1e-3)).riemann
    assert np.abs(R + np.swapaxes(R, 2, 3)).max() <= 1e-12


# sampled invariants -------------------------------------------------------------------------

@pytest.mark.parametrize("M", CATALOG, ids=lambda M: M.label)
def test_metric_invariants_at_100_points(M):
    pts = M.sample_points(100, seed=7)
    g = G.metric_jet(M, pts, 2)
    gv = g.value
    assert np.abs(gv - np.swapaxes(gv, 1, 2)).max() <= 1e-14
    assert np.linalg.eigvalsh(gv)[:, 0].min() > 0
    ginv = G.inverse_metric_jet(g, pts).value
    assert np.abs(ginv @ gv - np.eye(M.dim)).max() <= 1e-13
    gam = G.christoffel_jet(M, pts, 1)
    gv_ = gam.value
    assert np.abs(gv_ - np.swapaxes(gv_, 2, 3)).max() <= 1e-14
    # nabla g = 0: d_k g_ij - Gamma^l_ki g_lj - Gamma^l_kj g_il
    dg = np.stack([g.diff(k).value for k in range(M.dim)], axis=1)
    t = np.einsum("plki,plj->pkij", gv_, gv)
    assert np.abs(dg - t - np.swapaxes(t, 2, 3)).max() <= 1e-12


@pytest.mark.parametrize("M", CATALOG, ids=lambda M: M.label)
def test_sqrt_det_partials_match_finite_differences(M):
    pts = M.sample_points(10, seed=3, margin=1e-3)
    jet = G.sqrt_det_jet(G.metric_jet(M, pts, 1))
    f = lambda p: np.sqrt(np.linalg.det(G.metric_jet(M, p, 0).value))
    for axis in range(M.dim):
        fd = central_diff(f, pts, axis, h=1e-4)
        assert np.abs(jet.diff(axis).value - fd).max() <= 1e-6


# boundary data ---------------------------------------------------------------------------

def test_closed_chart_has_no_faces():
    assert G.boundary_data(G.flat_torus(2)) == []


def test_interval_faces():
    lo, hi = G.boundary_data(G.interval())
    assert lo.outward_unit_normal([[0.0]])[0, 0] == -1.0
    assert hi.outward_unit_normal([[1.0]])[0, 0] == 1.0
    assert lo.induced_density([[0.0]])[0] == 1.0


def test_annulus_faces():
    faces = G.boundary_data(G.annulus())
    assert [(f.axis, f.side, f.position) for f in faces] == [(0, "low", 1.0), (0, "high", 2.0)]
    pts = np.array([[2.0, 0.3]])
    assert np.allclose(faces[1].outward_unit_normal(pts)[0], [1.0, 0.0])
    assert faces[1].induced_density(pts)[0] == pytest.approx(2.0)
    assert faces[0].induced_density(np.array([[1.0, 0.3]]))[0] == pytest.approx(1.0)


@pytest.mark.parametrize("M", [G.sphere_chart(), G.annulus(), G.interval("1 + x^2"),
                               G.custom_chart([(0, 1), (0, 1)], [False, False],
                                              {(0, 0): "2 + x", (0, 1): "0.3*y",
                                               (1, 1): "1 + y^2"})],
                         ids=lambda M: M.label)
def test_unit_normals_at_50_points(M):
    for face in G.boundary_data(M):
        pts = M.sample_points(50, seed=4)
        pts[:, face.axis] = face.position
        nu = face.outward_unit_normal(pts)
        g = G.metric_jet(M, pts, 0).value
        assert np.abs(np.einsum("pi,pij,pj->p", nu, g, nu) - 1).max() <= 1e-12
        assert np.all(np.sign(nu[:, face.axis]) == face.sign)


def test_non_periodic_metric_on_periodic_axis_is_rejected():
    with pytest.raises(DomainError, match="not periodic"):
        G.custom_chart([(0.0, 1.0)], [True], {(0, 0): "1 + x"}, ("x",))


def test_check_metric_flags_indefinite_metric():
    M = G.custom_chart([(0.0, 1.0)], [False], {(0, 0): "x - 0.5"}, ("x",))
    with pytest.raises(DegeneracyError):
        G.check_metric(M, np.array([[0.1], [0.9]]))


def test_make_manifold_names():
    assert G.make_manifold("flat_torus3").dim == 3
    assert G.make_manifold("interval", {"g": "1 + x^2"}).label == "interval"
    with pytest.raises(DomainError):
        G.make_manifold("klein_bottle")
