"""Truncated multivariate Taylor arithmetic.

A :class:`Jet` stores, for a batch of points, the Taylor coefficients
``c_alpha = d^alpha f / alpha!`` of a tensor-valued field for every
multi-index ``|alpha| <= order``.  Coefficients live on the last axis in
graded order (all degree-0 monomials, then degree 1, ...), so truncating a
jet to a lower order is a prefix slice.  The first axis is always the point
batch; the axes in between are the tensor axes of the value.

Products, univariate compositions and matrix inverses are exact on the
truncated series, which makes every derivative we report exact up to
floating-point rounding.
"""

from dataclasses import dataclass
from functools import lru_cache
from itertools import permutations
from math import factorial

import numpy as np

from .errors import CapabilityError, DegeneracyError, ShapeError


def _graded_exponents(n, order):
    def compositions(total, parts):
        if parts == 1:
            yield (total,)
            return
        for first in range(total, -1, -1):
            for rest in compositions(total - first, parts - 1):
                yield (first,) + rest

    out = []
    for degree in range(order + 1):
        out.extend(compositions(degree, n))
    return out


@dataclass(frozen=True, eq=False)
class Layout:
    n: int
    order: int
    exponents: np.ndarray
    index: dict
    degrees: np.ndarray
    factorials: np.ndarray
    mul_plan: tuple
    diff_plan: tuple

    @property
    def size(self):
        return len(self.exponents)


@lru_cache(maxsize=None)
def layout(n, order):
    """Monomial bookkeeping for ``n`` variables truncated at ``order``."""
    exps = _graded_exponents(n, order)
    index = {e: i for i, e in enumerate(exps)}
    degrees = np.array([sum(e) for e in exps], dtype=int)
    facts = np.array([np.prod([factorial(k) for k in e]) for e in exps], dtype=float)

    mul_plan = []
    for i, ei in enumerate(exps):
        js, ks = [], []
        for j, ej in enumerate(exps):
            if degrees[i] + degrees[j] > order:
                break
            js.append(j)
            ks.append(index[tuple(a + b for a, b in zip(ei, ej))])
        mul_plan.append((np.array(js, dtype=int), np.array(ks, dtype=int)))

    diff_plan = []
    if order > 0:
        lower = _graded_exponents(n, order - 1)
        for axis in range(n):
            src, fac = [], []
            for e in lower:
                up = list(e)
                up[axis] += 1
                src.append(index[tuple(up)])
                fac.append(float(up[axis]))
            diff_plan.append((np.array(src, dtype=int), np.array(fac)))

    return Layout(n, order, np.array(exps, dtype=int).reshape(-1, n), index,
                  degrees, facts, tuple(mul_plan), tuple(diff_plan))


def size(n, order):
    return layout(n, order).size


class Jet:
    """Taylor coefficients of a tensor field on a batch of points.

    ``coeffs`` has shape ``(P, *value_shape, T)``; ``n`` is the number of
    chart variables and ``order`` the truncation degree.
    """

    __slots__ = ("coeffs", "n", "order")
    __array_priority__ = 100

    def __init__(self, coeffs, n, order):
        coeffs = np.asarray(coeffs, dtype=float)
        if order < 0:
            raise CapabilityError("jet order exhausted (requested order < 0)")
        if coeffs.ndim < 2 or coeffs.shape[-1] != size(n, order):
            raise ShapeError(
                f"coefficient axis of length {coeffs.shape[-1] if coeffs.ndim else 0} "
                f"does not match n={n}, order={order}")
        self.coeffs = coeffs
        self.n = n
        self.order = order

    # construction ---------------------------------------------------------
    @classmethod
    def constant(cls, value, n, order, batch=1):
        value = np.asarray(value, dtype=float)
        if value.ndim == 0 or value.shape[0] != batch:
            value = np.broadcast_to(value, (batch,) + value.shape)
        c = np.zeros(value.shape + (size(n, order),))
        c[..., 0] = value
        return cls(c, n, order)

    @classmethod
    def variable(cls, points, axis, order):
        """The coordinate function ``x^axis`` as a jet at ``points``."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        n = points.shape[1]
        c = np.zeros((points.shape[0], size(n, order)))
        c[:, 0] = points[:, axis]
        if order >= 1:
            e = [0] * n
            e[axis] = 1
            c[:, layout(n, order).index[tuple(e)]] = 1.0
        return cls(c, n, order)

    @classmethod
    def zeros(cls, shape, n, order):
        return cls(np.zeros(tuple(shape) + (size(n, order),)), n, order)

    # basic views ------------------------------------------------------------
    @property
    def shape(self):
        return self.coeffs.shape[:-1]

    @property
    def value_shape(self):
        return self.coeffs.shape[1:-1]

    @property
    def value(self):
        return self.coeffs[..., 0]

    def truncate(self, order):
        if order > self.order:
            raise CapabilityError(
                f"cannot raise jet order from {self.order} to {order}")
        if order == self.order:
            return self
        return Jet(self.coeffs[..., :size(self.n, order)], self.n, order)

    def diff(self, axis):
        """Partial derivative along chart axis ``axis``; lowers the order by one."""
        if self.order == 0:
            raise CapabilityError(
                "jet order exhausted: a derivative of an order-0 jet was requested")
        src, fac = layout(self.n, self.order).diff_plan[axis]
        return Jet(self.coeffs[..., src] * fac, self.n, self.order - 1)

    def partial(self, alpha):
        """The mixed partial ``d^alpha f`` (not divided by ``alpha!``)."""
        alpha = tuple(int(a) for a in alpha)
        if sum(alpha) > self.order:
            raise CapabilityError(
                f"partial of order {sum(alpha)} requested from a jet of order {self.order}")
        lay = layout(self.n, self.order)
        i = lay.index[alpha]
        return self.coeffs[..., i] * lay.factorials[i]

    def map(self, fn):
        """Apply a linear, axis-wise array operation to the coefficients."""
        return Jet(fn(self.coeffs), self.n, self.order)

    def __getitem__(self, idx):
        # indexes tensor axes; the batch and coefficient axes are kept
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Jet(self.coeffs[(slice(None),) + idx + (Ellipsis,)], self.n, self.order)

    def __repr__(self):
        return f"Jet(shape={self.shape}, n={self.n}, order={self.order})"

    # arithmetic -------------------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, Jet):
            if other.n != self.n:
                raise ShapeError("jets over different numbers of variables")
            order = min(self.order, other.order)
            return self.truncate(order), other.truncate(order)
        return self, None

    def __add__(self, other):
        a, b = self._coerce(other)
        if b is None:
            c = a.coeffs.copy()
            c[..., 0] = c[..., 0] + np.asarray(other, dtype=float)
            return Jet(c, a.n, a.order)
        return Jet(a.coeffs + b.coeffs, a.n, a.order)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.coeffs, self.n, self.order)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        a, b = self._coerce(other)
        if b is None:
            return Jet(a.coeffs * np.asarray(other, dtype=float)[..., None], a.n, a.order)
        return Jet(_mul_coeffs(a.coeffs, b.coeffs, layout(a.n, a.order)), a.n, a.order)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * reciprocal(other)
        return Jet(self.coeffs / np.asarray(other, dtype=float)[..., None], self.n, self.order)

    def __rtruediv__(self, other):
        return reciprocal(self) * other

    def __pow__(self, k):
        if isinstance(k, (int, np.integer)):
            if k < 0:
                return reciprocal(self) ** (-k)
            out = Jet.constant(np.ones(self.shape[1:]), self.n, self.order,
                               batch=self.shape[0]) if k == 0 else self
            for _ in range(int(k) - 1):
                out = out * self
            return out
        return power(self, float(k))


def _mul_coeffs(a, b, lay):
    shape = np.broadcast_shapes(a.shape[:-1], b.shape[:-1])
    out = np.zeros(shape + (lay.size,))
    for i, (js, ks) in enumerate(lay.mul_plan):
        ai = a[..., i:i + 1]
        if i and not ai.any():
            continue
        out[..., ks] += ai * b[..., js]
    return out


def einsum(a, a_axes, b, b_axes, out_axes):
    """Contract tensor axes of two jets with a Taylor product.

    Axis labels are small integers naming tensor axes only; the point batch
    axis is broadcast implicitly.  Example: ``einsum(g, [0, 1], v, [1], [0])``
    lowers an index.
    """
    if a.n != b.n:
        raise ShapeError("jets over different numbers of variables")
    order = min(a.order, b.order)
    a, b = a.truncate(order), b.truncate(order)
    lay = layout(a.n, order)
    t = max(list(a_axes) + list(b_axes) + list(out_axes) + [0]) + 1
    ac, bc = a.coeffs, b.coeffs
    out = None
    for i, (js, ks) in enumerate(lay.mul_plan):
        ai = ac[..., i]
        if i and not ai.any():
            continue
        term = np.einsum(ai, [Ellipsis, *a_axes], bc[..., js], [Ellipsis, *b_axes, t],
                         [Ellipsis, *out_axes, t])
        if out is None:
            out = np.zeros(term.shape[:-1] + (lay.size,))
        out[..., ks] += term
    return Jet(out, a.n, order)


def stack(jets, axis):
    """Stack jets along a new tensor axis (``axis`` counts tensor axes)."""
    order = min(j.order for j in jets)
    n = jets[0].n
    coeffs = [np.broadcast_to(j.truncate(order).coeffs, _bshape(jets, order)) for j in jets]
    return Jet(np.stack(coeffs, axis=1 + axis), n, order)


def _bshape(jets, order):
    return np.broadcast_shapes(*(j.truncate(order).coeffs.shape for j in jets))


# univariate compositions ------------------------------------------------------
def compose(a, derivatives):
    """``f(a)`` given ``derivatives[k] = f^(k)(a.value)`` for k = 0..order."""
    h = a.coeffs.copy()
    h[..., 0] = 0.0
    h = Jet(h, a.n, a.order)
    out = Jet.constant(derivatives[0], a.n, a.order, batch=a.shape[0])
    p = h
    for k in range(1, a.order + 1):
        out = out + p * (np.asarray(derivatives[k]) / factorial(k))
        if k < a.order:
            p = p * h
    return out


def sin(a):
    v = a.value
    return compose(a, [np.sin(v + k * np.pi / 2) for k in range(a.order + 1)])


def cos(a):
    v = a.value
    return compose(a, [np.cos(v + k * np.pi / 2) for k in range(a.order + 1)])


def exp(a):
    e = np.exp(a.value)
    return compose(a, [e] * (a.order + 1))


def power(a, q):
    v = a.value
    derivs = []
    coef = 1.0
    for k in range(a.order + 1):
        derivs.append(coef * v ** (q - k))
        coef *= q - k
    return compose(a, derivs)


def reciprocal(a):
    v = a.value
    if np.any(v == 0):
        raise DegeneracyError("reciprocal of a jet with zero value")
    return power(a, -1.0)


def sqrt(a):
    if np.any(a.value <= 0):
        raise DegeneracyError("square root of a nonpositive jet value")
    return power(a, 0.5)


# matrix-valued jets -------------------------------------------------------------
def matmul(a, b):
    """Matrix product over the last two tensor axes (both operands rank-2)."""
    return einsum(a, [0, 1], b, [1, 2], [0, 2])


def inverse(m, points=None):
    """Inverse of a square-matrix jet by the Neumann series about its value."""
    m0 = m.value
    det = np.linalg.det(m0)
    scale = np.abs(m0).max(axis=(-1, -2)) ** m0.shape[-1]
    bad = ~(np.abs(det) > 1e-14 * np.maximum(scale, 1e-300))
    if np.any(bad):
        where = int(np.argmax(bad))
        at = f" at point {points[where].tolist()}" if points is not None else ""
        raise DegeneracyError(f"singular matrix{at}")
    x0 = Jet.constant(np.linalg.inv(m0), m.n, m.order, batch=m0.shape[0])
    h = m.coeffs.copy()
    h[..., 0] = 0.0
    h = Jet(h, m.n, m.order)
    step = -matmul(x0, h)
    term = x0
    total = x0
    for _ in range(m.order):
        term = matmul(step, term)
        total = total + term
    return total


def det(m):
    """Determinant by the permutation expansion (small matrices only)."""
    k = m.value_shape[-1]
    total = None
    for perm in permutations(range(k)):
        sign = _perm_sign(perm)
        term = _entry(m, 0, perm[0])
        for row in range(1, k):
            term = term * _entry(m, row, perm[row])
        term = term * float(sign)
        total = term if total is None else total + term
    return total


def _entry(m, i, j):
    return Jet(m.coeffs[:, i, j, :], m.n, m.order)


def _perm_sign(perm):
    sign, seen = 1, list(perm)
    for i in range(len(seen)):
        while seen[i] != i:
            j = seen[i]
            seen[i], seen[j] = seen[j], seen[i]
            sign = -sign
    return sign


DEFAULT_MAX_ORDER = 4


class JetField:
    """A field that can be evaluated with all partials up to ``max_order``.

    ``func(points, order)`` must return a :class:`Jet` of shape
    ``(P, *shape)``.  Evaluation is expected to be a pure function of its
    arguments.
    """

    def __init__(self, shape, func, max_order=DEFAULT_MAX_ORDER, label="field"):
        self.shape = tuple(shape)
        self.max_order = int(max_order)
        self.label = label
        self._func = func

    def eval(self, points, order):
        if order > self.max_order:
            raise CapabilityError(
                f"{self.label}: jet of order {order} requested, "
                f"but only order <= {self.max_order} is available")
        if order < 0:
            raise CapabilityError(f"{self.label}: jet order exhausted (order {order})")
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = self._func(points, order)
        if out.value_shape != self.shape:
            raise ShapeError(f"{self.label}: expected value shape {self.shape}, "
                             f"got {out.value_shape}")
        return out

    def partials(self, points, order):
        """All mixed partials through ``order`` as ``{alpha: array}``."""
        jet = self.eval(points, order)
        lay = layout(jet.n, order)
        return {tuple(int(a) for a in e): jet.partial(e) for e in lay.exponents}

    def __repr__(self):
        return f"JetField({self.label!r}, shape={self.shape}, max_order={self.max_order})"
