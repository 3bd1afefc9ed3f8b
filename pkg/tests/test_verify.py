import json
import math

import numpy as np
import pytest

from bundlecalc import bundle as B
from bundlecalc import fields as F
from bundlecalc import geometry as G
from bundlecalc import quadrature as Q
from bundlecalc import verify as V
from bundlecalc.errors import CapabilityError, ParameterError, PreconditionError, ShapeError

T1, T2 = G.flat_torus(1), G.flat_torus(2)
S2, WT, ANN, I = G.sphere_chart(), G.warped_torus2(), G.annulus(), G.interval()


def expr(E, comps, k=0, l=0):
    return F.section_from_expressions(E, comps, k=k, l=l)


def seeded(E, kind, seed, ranks, stream=0, **kw):
    return F.make_section(F.SectionSpec(kind, 3, seed, ranks, **kw), E, stream=stream)


# integration by parts -----------------------------------------------------------------------

def test_interval_ibp_by_hand():
    E = B.trivial_bundle(I)
    r = V.check_ibp(expr(E, ["x"]), expr(E, ["2*x"], l=1), 1)
    assert r.lhs == pytest.approx(1.0, abs=1e-14)
    assert r.rhs == pytest.approx(-1.0, abs=1e-14)
    assert r.boundary == pytest.approx(2.0, abs=1e-14)
    assert r.abs_residual <= 1e-14 and r.passed


def test_flat_torus_ibp_order_three():
    E = B.trivial_bundle(T2)
    r = V.check_ibp(seeded(E, "trig", 3, (0, 0)), seeded(E, "trig", 3, (0, 3), 1), 3)
    assert r.rel_residual <= 1e-10 and r.boundary == 0.0 and r.passed


def test_annulus_bump_ibp_kills_the_boundary():
    E = B.rot2(ANN)
    f = seeded(E, "bump", 1, (0, 0), margin=0.25)
    g = seeded(E, "bump", 1, (0, 2), 1, margin=0.25)
    r = V.check_ibp(f, g, 2, Q.make_grid(ANN, (256, 32)))
    assert abs(r.boundary) <= 1e-13
    assert r.rel_residual <= 1e-9


def test_annulus_smooth_ibp_with_boundary_terms():
    E = B.conformal(ANN, 2)
    r = V.check_ibp(seeded(E, "smooth", 2, (0, 0)), seeded(E, "smooth", 2, (0, 2), 1), 2)
    assert abs(r.boundary) > 1e-3
    assert r.rel_residual <= 1e-8


def test_ibp_rank_mismatch():
    E = B.trivial_bundle(T2)
    with pytest.raises(ShapeError):
        V.check_ibp(seeded(E, "trig", 0, (0, 0)), seeded(E, "trig", 0, (0, 1)), 2)


# adjoint pairing --------------------------------------------------------------------------------

def test_circle_adjoint_pairing():
    E = B.trivial_bundle(T1)
    r = V.check_adjoint_pairing(expr(E, ["sin(x)"]), expr(E, ["cos(x)"], l=1), 1)
    assert r.lhs == pytest.approx(math.pi, abs=1e-13)
    assert r.rhs == pytest.approx(math.pi, abs=1e-13)
    assert r.abs_residual <= 1e-13
    z = V.check_adjoint_pairing(expr(E, ["sin(x)"]), expr(E, ["0"], l=1), 1)
    assert z.lhs == 0.0 and z.rhs == 0.0 and z.passed


def test_warped_rot2_adjoint_order_two():
    E = B.rot2(WT)
    r = V.check_adjoint_pairing(seeded(E, "trig", 5, (0, 0)), seeded(E, "trig", 5, (0, 2), 1),
                                2, Q.make_grid(WT, 32))
    assert r.rel_residual <= 1e-10


def test_adjoint_needs_compact_support_with_boundary():
    E = B.trivial_bundle(ANN)
    with pytest.raises(PreconditionError):
        V.check_adjoint_pairing(seeded(E, "smooth", 0, (0, 0)), seeded(E, "bump", 0, (0, 1)), 1)


# Green -------------------------------------------------------------------------------------

def test_green_examples():
    E = B.trivial_bundle(T1)
    u = expr(E, ["sin(x)"])
    r = V.check_green(u, u)
    assert (r.lhs, r.boundary) == (pytest.approx(math.pi, abs=1e-13), 0.0)
    assert r.rhs == pytest.approx(math.pi, abs=1e-13)
    EI = B.trivial_bundle(I)
    r = V.check_green(expr(EI, ["x"]), expr(EI, ["x^2"]))
    assert (r.lhs, r.rhs, r.boundary) == (pytest.approx(1), pytest.approx(-1), pytest.approx(2))


def test_green_annulus_rot2():
    E = B.rot2(ANN)
    r = V.check_green(seeded(E, "smooth", 4, (0, 0)), seeded(E, "smooth", 4, (0, 0), 1))
    assert r.rel_residual <= 1e-8 and r.passed


# commutator ------------------------------------------------------------------------------

@pytest.mark.parametrize("m", [1, 2])
def test_flat_commutator(m):
    E = B.trivial_bundle(T2)
    r = V.check_commutator(seeded(E, "trig", 7, (0, 0)), m)
    assert r.abs_residual <= 1e-11 * max(1.0, r.lhs)


def test_sphere_commutator_with_ricci_term():
    r = V.check_commutator(seeded(B.trivial_bundle(S2), "bump", 0, (0, 0)), 1)
    assert r.rel_residual <= 1e-8
    assert r.reason == "ricci sign +1"


def test_wrong_ricci_sign_fails_on_the_sphere():
    r = V.check_commutator(seeded(B.trivial_bundle(S2), "bump", 0, (0, 0)), 1, sign=-1)
    assert r.rel_residual > 1e-3


def test_constant_commutator_is_zero():
    r = V.check_commutator(expr(B.trivial_bundle(S2), ["2"]), 1)
    assert r.abs_residual == 0.0


def test_curved_higher_commutator_is_unimplemented():
    with pytest.raises(CapabilityError):
        V.check_commutator(seeded(B.trivial_bundle(S2), "bump", 0, (0, 0)), 2)
    with pytest.raises(CapabilityError):
        V.check_commutator(seeded(B.rot2(T2), "trig", 0, (0, 0)), 1)


# divergence identity -----------------------------------------------------------------------

def test_divergence_identity_examples():
    pts = T2.sample_points(10)
    Y = seeded(B.trivial_bundle(T2), "trig", 2, (0, 1))
    assert V.check_divergence_identity(Y, pts).max() <= 1e-14
    theta = 0.9
    lhs, rhs = V.divergence_sides(expr(B.trivial_bundle(S2), ["1", "0"], l=1), [[theta, 0.1]])
    assert lhs[0, 0] == pytest.approx(1 / math.tan(theta), rel=1e-14)
    assert rhs[0, 0] == pytest.approx(1 / math.tan(theta), rel=1e-14)


@pytest.mark.parametrize("M", [WT, S2], ids=lambda M: M.label)
def test_divergence_identity_at_100_points(M):
    Y = seeded(B.rot2(M), "trig" if M.is_closed else "smooth", 3, (0, 1))
    assert V.check_divergence_identity(Y, M.sample_points(100, seed=21)).max() <= 1e-11


# bochner powers ---------------------------------------------------------------------------

def test_bochner_power_check():
    u = seeded(B.conformal(WT, 2), "trig", 1, (0, 0))
    err, ok = V.check_bochner_power(u, 2, WT.sample_points(10))
    assert ok


# norms ---------------------------------------------------------------------------------------

def test_sobolev_norm_examples():
    E = B.trivial_bundle(T1)
    u = expr(E, ["sin(x)"])
    assert V.sobolev_norm(u, 1, 2).total == pytest.approx(math.sqrt(2 * math.pi), rel=1e-14)
    assert V.sobolev_norm(u, 0, 4).total == pytest.approx((3 * math.pi / 4) ** 0.25, rel=1e-14)
    assert V.sobolev_norm(expr(E, ["0"]), 2).total == 0.0
    with pytest.raises(ParameterError):
        V.sobolev_norm(u, 1, 0.5)


@pytest.mark.parametrize("p", [1, 2, 4])
def test_sobolev_norm_is_monotone_in_m(p):
    u = seeded(B.rot2(WT), "trig", 2, (0, 0))
    totals = [V.sobolev_norm(u, m, p).total for m in range(4)]
    assert all(a <= b for a, b in zip(totals, totals[1:]))
    assert all(t >= -1e-12 for t in V.sobolev_norm(u, 3, p).terms)


def test_structured_norm_examples():
    E = B.trivial_bundle(T1)
    u = expr(E, ["sin(x)"])
    assert V.structured_norm(u, 2).structured_total == pytest.approx(3 * math.pi, rel=1e-14)
    v = seeded(B.rot2(WT), "trig", 2, (0, 0))
    rep = V.structured_norm(v, 1)
    assert rep.structured_total == pytest.approx(math.fsum(rep.terms), rel=1e-14)
    with pytest.raises(PreconditionError):
        V.structured_norm(seeded(B.trivial_bundle(ANN), "smooth", 0, (0, 0)), 1)


def test_flat_norm_equivalence_is_exact():
    E = B.trivial_bundle(T2)
    secs = [seeded(E, "trig", s, (0, 0)) for s in range(20)]
    rep = V.norm_equivalence_report(secs, 3)
    assert abs(rep["ratio_min"] - 1) <= 1e-10 and abs(rep["ratio_max"] - 1) <= 1e-10
    rep0 = V.norm_equivalence_report(secs[:3], 0)
    assert all(r == 1.0 for r in rep0["ratios"].values())


def test_zero_section_is_excluded_with_warning():
    E = B.trivial_bundle(T2)
    rep = V.norm_equivalence_report([expr(E, ["0"]), seeded(E, "trig", 1, (0, 0))], 1)
    assert len(rep["ratios"]) == 1 and rep["warnings"]
    with pytest.raises(ParameterError):
        V.norm_equivalence_report([], 1)


def test_flat_scalar_component_ratio_is_one():
    u = seeded(B.trivial_bundle(T2), "trig", 3, (0, 0))
    for p, r in V.component_norm_ratio(u, 2, [1, 2, 4]).items():
        assert abs(r["ratio"] - 1) <= 1e-12


def test_conformal_component_ratio_respects_fiber_constants():
    E = B.conformal(T2, 2)
    u = seeded(E, "trig", 3, (0, 0))
    grid = Q.make_grid(T2)
    r = V.component_norm_ratio(u, 0, 2, grid)["ratio"]
    c, C = B.fiber_metric_equivalence_constants(B.trivial_bundle(T2, 2).fiber_metric,
                                                E.fiber_metric, grid.points)
    # the component sum over a = 1, 2 lies between the l2 norm and sqrt(2) times it
    assert math.sqrt(c) / math.sqrt(2) - 1e-12 <= r <= math.sqrt(C) + 1e-12


# reports ----------------------------------------------------------------------------------

def test_report_round_trip_and_pass_flag():
    E = B.trivial_bundle(T2)
    r = V.check_ibp(seeded(E, "trig", 3, (0, 0)), seeded(E, "trig", 3, (0, 1), 1), 1)
    d = json.loads(r.to_json())
    assert tuple(sorted(d)) == tuple(sorted(V.REPORT_KEYS))
    assert V.ResidualReport.from_dict(d) == r
    assert r.passed == (r.rel_residual <= r.tolerance)
    assert r.tolerance == V.CLOSED_TOLERANCE
    assert V.default_tolerance(ANN) == V.BOUNDED_TOLERANCE


@pytest.mark.parametrize("lam", [1e-3, 1.0, 1e3])
def test_pass_flags_are_scale_free(lam):
    E = B.rot2(WT)
    f = seeded(E, "trig", 6, (0, 0))
    g = seeded(E, "trig", 6, (0, 2), 1)
    base = V.check_ibp(f, g, 2)
    scaled = V.check_ibp(f.scaled(lam), g, 2)
    assert scaled.passed == base.passed
    assert abs(scaled.rel_residual - base.rel_residual) <= 1e-13


def test_grid_halving_oracle():
    E = B.rot2(WT)
    f, g = seeded(E, "trig", 8, (0, 0)), seeded(E, "trig", 8, (0, 1), 1)
    coarse = V.check_ibp(f, g, 1, Q.make_grid(WT, 32))
    fine = V.check_ibp(f, g, 1, Q.make_grid(WT, 64))
    assert fine.abs_residual <= max(10 * coarse.abs_residual, 1e-13 * max(1, abs(fine.lhs)))
