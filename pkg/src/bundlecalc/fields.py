"""Sections of T^(k,l)(TM) (x) E, pointwise inner products, seeded generators.

Component arrays are dense with tensor axes ordered
``(i_1..i_k, j_1..j_l, a)``: contravariant slots, covariant slots, then the
fiber index.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre

from . import jets
from .errors import DegeneracyError, DomainError, ParameterError, ShapeError
from .jets import DEFAULT_MAX_ORDER, Jet, JetField

SECTION_KINDS = ("trig", "bump", "smooth")


def point_key(points):
    points = np.ascontiguousarray(points, dtype=float)
    return points.shape, hash(points.tobytes())


class TensorSection:
    """A jet-evaluable section of T^(k,l)(TM) (x) E over ``bundle``."""

    def __init__(self, k, l, bundle, field, support="full", margin=None, label="section",
                 seed=None):
        self.k, self.l = int(k), int(l)
        self.bundle = bundle
        n, r = bundle.base.dim, bundle.rank
        expected = (n,) * (self.k + self.l) + (r,)
        if field.shape != expected:
            raise ShapeError(f"section components must have shape {expected}, got {field.shape}")
        if support not in ("full", "compact"):
            raise ParameterError("support must be 'full' or 'compact'")
        self.field = field
        self.support = support
        self.margin = margin
        self.label = label
        self.seed = seed
        self._cache = {}

    @property
    def base(self):
        return self.bundle.base

    @property
    def ranks(self):
        return self.k, self.l

    @property
    def shape(self):
        return self.field.shape

    @property
    def max_order(self):
        return self.field.max_order

    def jet(self, points, order):
        """Components and all partials through ``order`` at ``points``."""
        pts = self.base.check_points(points)
        key = point_key(pts)
        hit = self._cache.get(key)
        if hit is not None and hit.order >= order:
            return hit.truncate(order)
        out = self.field.eval(pts, order)
        if len(self._cache) > 8:
            self._cache.clear()
        self._cache[key] = out
        return out

    def values(self, points):
        return self.jet(points, 0).value

    def scaled(self, factor):
        """The section ``factor * self`` (same support)."""
        f = self.field
        field = JetField(f.shape, lambda p, o: f.eval(p, o) * float(factor),
                         max_order=f.max_order, label=f"{f.label}*{factor:g}")
        return TensorSection(self.k, self.l, self.bundle, field, self.support, self.margin,
                             self.label, self.seed)

    def __add__(self, other):
        if other.ranks != self.ranks or other.bundle is not self.bundle:
            raise ShapeError("sections must share ranks and bundle")
        f, g = self.field, other.field
        field = JetField(f.shape, lambda p, o: f.eval(p, o) + g.eval(p, o),
                         max_order=min(f.max_order, g.max_order), label=f"{f.label}+{g.label}")
        support = "compact" if self.support == other.support == "compact" else "full"
        return TensorSection(self.k, self.l, self.bundle, field, support, label=self.label)

    def __repr__(self):
        return (f"TensorSection({self.label!r}, k={self.k}, l={self.l}, "
                f"bundle={self.bundle.label!r}, support={self.support!r})")


def section_from_function(k, l, bundle, func, max_order=DEFAULT_MAX_ORDER, label="section",
                          support="full"):
    n, r = bundle.base.dim, bundle.rank
    shape = (n,) * (k + l) + (r,)
    return TensorSection(k, l, bundle, JetField(shape, func, max_order, label), support,
                         label=label)


def section_from_expressions(bundle, components, k=0, l=0, max_order=DEFAULT_MAX_ORDER,
                             label="section"):
    """Section whose components are expression strings.

    ``components`` is a nested list matching the component shape, or a flat
    list in C order.
    """
    from .expressions import Expression

    M = bundle.base
    shape = (M.dim,) * (k + l) + (bundle.rank,)
    flat = list(np.asarray(components, dtype=object).reshape(-1))
    if len(flat) != int(np.prod(shape)):
        raise ShapeError(f"expected {int(np.prod(shape))} component expressions")
    exprs = [e if isinstance(e, Expression) else Expression(str(e), M.coords) for e in flat]

    def func(points, order):
        c = np.stack([e.jet(points, order).coeffs for e in exprs], axis=1)
        return Jet(c.reshape((points.shape[0],) + shape + (c.shape[-1],)), M.dim, order)

    return section_from_function(k, l, bundle, func, max_order, label)


# inner products -------------------------------------------------------------------

def inner_jet(F, G, k, l, g, ginv, h):
    """<F, G> for component jets F, G of a (k, l) (x) E section.

    Contravariant slots contract with ``g``, covariant slots with ``ginv``,
    the fiber slot with ``h``.
    """
    rank = k + l + 1
    labels = list(range(rank))
    spare = rank
    for t in range(rank):
        metric = g if t < k else (ginv if t < k + l else h)
        src = list(labels)
        src[t] = spare
        G = jets.einsum(metric, [t, spare], G, src, labels)
    return jets.einsum(F, labels, G, labels, [])


def pointwise_inner(F, G, x):
    """<F, G>(x) for sections F, G with equal ranks over the same bundle."""
    if F.ranks != G.ranks or F.bundle is not G.bundle:
        raise ShapeError(f"inner product of sections with ranks {F.ranks} and {G.ranks}")
    from .calculus import context_for

    ctx = context_for(F.bundle)
    pts = F.base.check_points(x)
    return inner_jet(F.jet(pts, 0), G.jet(pts, 0), F.k, F.l, ctx.metric(pts, 0),
                     ctx.inverse_metric(pts, 0), ctx.fiber_metric(pts, 0)).value


def norm_from_square(sq):
    sq = np.asarray(sq, dtype=float)
    if np.any(sq < -1e-12 * np.maximum(1.0, np.abs(sq).max(initial=0.0))):
        raise DegeneracyError("negative pointwise inner square; fiber or base metric is not SPD")
    return np.sqrt(np.maximum(sq, 0.0))


def pointwise_norm(F, x):
    return norm_from_square(pointwise_inner(F, F, x))


# seeded generators -------------------------------------------------------------------

@dataclass(frozen=True)
class SectionSpec:
    kind: str = "trig"
    degree: int = 3
    seed: int = 0
    ranks: tuple = (0, 0)
    margin: float = None

    def __post_init__(self):
        if self.kind not in SECTION_KINDS:
            raise ParameterError(f"unknown section kind {self.kind!r}")
        if self.degree < 0:
            raise ParameterError("degree must be nonnegative")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ParameterError("seeds are 64-bit unsigned integers")
        object.__setattr__(self, "ranks", tuple(int(v) for v in self.ranks))

    def with_ranks(self, k, l):
        return SectionSpec(self.kind, self.degree, self.seed, (k, l), self.margin)


def _trig_basis_taylor(x, omega_count, length, a, order):
    """Univariate Taylor coefficients of 1, cos(w t), sin(w t), ... (t = x - a)."""
    t = x - a
    out = [np.zeros((x.size, order + 1))]
    out[0][:, 0] = 1.0
    for m in range(1, omega_count + 1):
        w = 2.0 * math.pi * m / length
        for phase in (0.0, -math.pi / 2):      # cos, then sin = cos(. - pi/2)
            c = np.empty((x.size, order + 1))
            for j in range(order + 1):
                c[:, j] = w ** j * np.cos(w * t + phase + j * math.pi / 2) / math.factorial(j)
            out.append(c)
    return np.stack(out, axis=1)                # (P, nb, order+1)


@lru_cache(maxsize=None)
def _legendre_derivatives(degree, order):
    return [[legendre.Legendre.basis(m).deriv(j) if j else legendre.Legendre.basis(m)
             for j in range(order + 1)] for m in range(degree + 1)]


def _legendre_basis_taylor(x, degree, a, b, order):
    s = (2.0 * x - a - b) / (b - a)
    scale = 2.0 / (b - a)
    polys = _legendre_derivatives(degree, order)
    out = np.empty((x.size, degree + 1, order + 1))
    for m in range(degree + 1):
        for j in range(order + 1):
            out[:, m, j] = polys[m][j](s) * scale ** j / math.factorial(j)
    return out


def _plateau_taylor(t, dt, order):
    """Taylor coefficients in x of psi(t(x)), t affine in x with slope dt.

    psi is 0 for t <= 0, 1 for t >= 1 and C-infinity in between, built from
    f(t) = exp(-1/t) as f(t) / (f(t) + f(1 - t)).
    """
    out = np.zeros((t.size, order + 1))
    out[t >= 1.0, 0] = 1.0
    mid = (t > 1e-3) & (t < 1.0 - 1e-3)
    # below 1e-3 every coefficient is under exp(-1000) * poly(1000): zero in double
    out[(t >= 1.0 - 1e-3) & (t < 1.0), 0] = 1.0
    if np.any(mid):
        tv = t[mid]
        coeffs = np.zeros((tv.size, order + 1))
        coeffs[:, 0] = tv
        if order >= 1:
            coeffs[:, 1] = dt
        tj = Jet(coeffs, 1, order)
        f = jets.exp(-jets.reciprocal(tj))
        fc = jets.exp(-jets.reciprocal(1.0 - tj))
        out[mid] = (f / (f + fc)).coeffs
    return out


def _window_taylor(x, a, b, margin, order):
    lo = _plateau_taylor((x - a - margin) / margin, 1.0 / margin, order)
    hi = _plateau_taylor((b - margin - x) / margin, -1.0 / margin, order)
    return Jet(lo, 1, order) * Jet(hi, 1, order)


class _SeededCore:
    """Random linear combination of tensor-product basis functions."""

    def __init__(self, M, shape, degree, rng):
        self.M = M
        self.shape = tuple(shape)
        self.degree = degree
        sizes = [2 * degree + 1 if p else degree + 1 for p in M.periodic]
        self.coef = rng.uniform(-1.0, 1.0, size=tuple(sizes) + (int(np.prod(shape)),))

    def _axis_taylor(self, x, axis, order):
        (a, b), L = self.M.domain[axis], self.M.lengths[axis]
        if self.M.periodic[axis]:
            return _trig_basis_taylor(x, self.degree, L, a, order)
        return _legendre_basis_taylor(x, self.degree, a, b, order)

    def __call__(self, points, order):
        P, n = points.shape
        per_axis = [self._axis_taylor(points[:, i], i, order) for i in range(n)]
        lay = jets.layout(n, order)
        out = np.empty((P, self.coef.shape[-1], lay.size))
        for t, alpha in enumerate(lay.exponents):
            X = np.einsum("pb,b...->p...", per_axis[0][:, :, alpha[0]], self.coef)
            for i in range(1, n):
                X = np.einsum("pb,pb...->p...", per_axis[i][:, :, alpha[i]], X)
            out[:, :, t] = X
        return Jet(out.reshape((P,) + self.shape + (lay.size,)), n, order)


def _rng(spec, stream):
    return np.random.default_rng(np.random.SeedSequence([int(spec.seed), int(stream)]))


def _core_section(spec, bundle, stream, max_order):
    M = bundle.base
    k, l = spec.ranks
    shape = (M.dim,) * (k + l) + (bundle.rank,)
    core = _SeededCore(M, shape, spec.degree, _rng(spec, stream))
    return shape, core


def make_trig_section(spec, bundle, stream=0, max_order=DEFAULT_MAX_ORDER):
    """Trigonometric-polynomial section on an all-periodic chart."""
    M = bundle.base
    if not M.is_closed:
        raise DomainError(f"{M.label}: trig sections need every axis periodic")
    shape, core = _core_section(spec, bundle, stream, max_order)
    field = JetField(shape, core, max_order, label=f"trig[{spec.seed}]")
    return TensorSection(*spec.ranks, bundle, field, "full",
                         label=f"trig(seed={spec.seed})", seed=spec.seed)


def make_smooth_section(spec, bundle, stream=0, max_order=DEFAULT_MAX_ORDER):
    """Trig in periodic axes times Legendre polynomials in bounded axes; no window."""
    shape, core = _core_section(spec, bundle, stream, max_order)
    field = JetField(shape, core, max_order, label=f"smooth[{spec.seed}]")
    return TensorSection(*spec.ranks, bundle, field, "full",
                         label=f"smooth(seed={spec.seed})", seed=spec.seed)


def default_margin(M):
    bounded = [L for L, p in zip(M.lengths, M.periodic) if not p]
    return 0.1 * min(bounded) if bounded else None


def make_bump_section(spec, bundle, stream=0, max_order=DEFAULT_MAX_ORDER):
    """Seeded core times a plateau window vanishing within ``margin`` of each face."""
    M = bundle.base
    margin = spec.margin if spec.margin is not None else default_margin(M)
    bounded = [i for i, p in enumerate(M.periodic) if not p]
    if bounded:
        if margin is None or margin <= 0:
            raise DomainError("bump sections need a positive margin")
        if margin >= 0.5 * min(M.lengths[i] for i in bounded):
            raise DomainError(f"margin {margin} is not below half the smallest bounded axis")
    shape, core = _core_section(spec, bundle, stream, max_order)
    n = M.dim

    def func(points, order):
        c = core(points, order)
        w = None
        for i in bounded:
            a, b = M.domain[i]
            uni = _window_taylor(points[:, i], a, b, margin, order).coeffs
            w_i = _embed_univariate(uni, i, n, order)
            w = w_i if w is None else w * w_i
        if w is None:
            return c
        return c * Jet(w.coeffs.reshape((points.shape[0],) + (1,) * len(shape) + (-1,)),
                       n, order)

    field = JetField(shape, func, max_order, label=f"bump[{spec.seed}]")
    return TensorSection(*spec.ranks, bundle, field, "compact", margin=margin,
                         label=f"bump(seed={spec.seed})", seed=spec.seed)


def _embed_univariate(coeffs, axis, n, order):
    """Lift univariate Taylor coefficients in x^axis into the n-variable layout."""
    lay = jets.layout(n, order)
    out = np.zeros((coeffs.shape[0], lay.size))
    for t, alpha in enumerate(lay.exponents):
        if all(alpha[i] == 0 for i in range(n) if i != axis):
            out[:, t] = coeffs[:, alpha[axis]]
    return Jet(out, n, order)


GENERATORS = {"trig": make_trig_section, "bump": make_bump_section,
              "smooth": make_smooth_section}


def make_section(spec, bundle, stream=0, max_order=DEFAULT_MAX_ORDER):
    return GENERATORS[spec.kind](spec, bundle, stream=stream, max_order=max_order)
