import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bundlecalc import jets
from bundlecalc.errors import CapabilityError, DegeneracyError, ShapeError
from bundlecalc.jets import Jet, JetField


def var(points, axis, order):
    return Jet.variable(np.atleast_2d(points), axis, order)


def test_layout_is_graded_and_prefix_closed():
    lay = jets.layout(2, 3)
    assert lay.size == 10
    assert list(lay.degrees) == sorted(lay.degrees)
    assert jets.size(3, 2) == 10
    assert tuple(lay.exponents[0]) == (0, 0)


def test_product_rule_matches_closed_form():
    p = np.array([[0.3, -0.7]])
    x, y = var(p, 0, 3), var(p, 1, 3)
    f = x * x * y                         # x^2 y
    assert f.partial((1, 0))[0] == pytest.approx(2 * 0.3 * -0.7)
    assert f.partial((2, 1))[0] == pytest.approx(2.0)
    assert f.partial((0, 2))[0] == 0.0


def test_sin_exp_compositions_against_closed_forms():
    p = np.array([[0.4, 1.1]])
    x, y = var(p, 0, 4), var(p, 1, 4)
    f = jets.sin(x * y)
    # d^2/dx dy sin(xy) = cos(xy) - xy sin(xy)
    xy = 0.4 * 1.1
    assert f.partial((1, 1))[0] == pytest.approx(math.cos(xy) - xy * math.sin(xy), abs=1e-14)
    g = jets.exp(x * 2.0)
    assert g.partial((4, 0))[0] == pytest.approx(16 * math.exp(0.8), rel=1e-14)


def test_mixed_partials_are_symmetric():
    p = np.random.default_rng(0).uniform(-1, 1, (20, 3))
    x, y, z = (var(p, i, 4) for i in range(3))
    f = jets.cos(x * y + z) * jets.exp(y - 0.5 * z)
    a = f.diff(0).diff(1).diff(2).value
    b = f.diff(2).diff(0).diff(1).value
    assert np.abs(a - b).max() <= 1e-12


def test_inverse_and_det_of_matrix_jet():
    p = np.array([[0.3, 0.8]])
    x, y = var(p, 0, 3), var(p, 1, 3)
    one = Jet.constant(np.ones(1), 2, 3)
    m = jets.stack([jets.stack([one + x * x, x * y], 0), jets.stack([x * y, one + y * y], 0)], 0)
    inv = jets.inverse(m)
    prod = jets.matmul(m, inv)
    eye = np.zeros_like(prod.coeffs)
    eye[:, 0, 0, 0] = eye[:, 1, 1, 0] = 1.0
    assert np.abs(prod.coeffs - eye).max() <= 1e-13
    d = jets.det(m)                       # 1 + x^2 + y^2
    assert d.value[0] == pytest.approx(1 + 0.09 + 0.64)
    assert d.partial((2, 0))[0] == pytest.approx(2.0)
    assert d.partial((1, 1))[0] == pytest.approx(0.0, abs=1e-14)


def test_inverse_of_singular_matrix_names_the_point():
    m = Jet.constant(np.zeros((1, 2, 2)), 2, 1)
    with pytest.raises(DegeneracyError, match=r"\[0.5, 0.5\]"):
        jets.inverse(m, np.array([[0.5, 0.5]]))


def test_sqrt_rejects_nonpositive_values():
    with pytest.raises(DegeneracyError):
        jets.sqrt(Jet.constant(np.array([-1.0]), 1, 2))


def test_order_exhaustion_is_a_capability_error():
    x = var(np.array([[0.1]]), 0, 1)
    with pytest.raises(CapabilityError):
        x.diff(0).diff(0)
    with pytest.raises(CapabilityError):
        x.truncate(2)
    field = JetField((), lambda p, o: var(p, 0, o), max_order=2, label="f")
    with pytest.raises(CapabilityError, match="order 3"):
        field.eval(np.array([[0.1]]), 3)


def test_jetfield_checks_value_shape():
    bad = JetField((2,), lambda p, o: var(p, 0, o))
    with pytest.raises(ShapeError):
        bad.eval(np.array([[0.1]]), 1)


def test_evaluation_is_bit_reproducible():
    p = np.random.default_rng(3).uniform(0, 1, (7, 2))
    f = lambda: (jets.sin(var(p, 0, 4)) * jets.exp(var(p, 1, 4))).coeffs
    assert np.array_equal(f(), f())


def test_partials_dict_matches_finite_differences():
    field = JetField((), lambda p, o: jets.sin(var(p, 0, o) * 2.0) * var(p, 1, o), max_order=3)
    x = np.array([[0.25, 0.5]])
    parts = field.partials(x, 2)
    h = 1e-5
    fd = (math.sin(2 * (0.25 + h)) - math.sin(2 * (0.25 - h))) / (2 * h) * 0.5
    assert parts[(1, 0)][0] == pytest.approx(fd, abs=1e-9)
    assert parts[(1, 1)][0] == pytest.approx(2 * math.cos(0.5), abs=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.integers(1, 4))
def test_leibniz_rule_for_products(a, b, order):
    p = np.array([[a, b]])
    x, y = var(p, 0, order), var(p, 1, order)
    f, g = jets.sin(x + y * 0.5), jets.exp(x * y * 0.3)
    lhs = (f * g).diff(0).value
    rhs = (f.diff(0) * g.truncate(order - 1) + f.truncate(order - 1) * g.diff(0)).value
    assert np.allclose(lhs, rhs, atol=1e-12, rtol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.2, 3.0), st.floats(-1.5, 1.5))
def test_power_and_reciprocal_agree(v, q):
    a = var(np.array([[v]]), 0, 3)
    assert np.allclose((a ** q * a ** (-q)).coeffs, Jet.constant(np.ones(1), 1, 3).coeffs,
                       atol=1e-12)
