"""Covariant derivative, metric trace, formal adjoint and Bochner Laplacian.

Every operator maps a :class:`~bundlecalc.fields.TensorSection` to a new
lazily evaluated section.  Asking the result for a jet of order d pulls a
jet of order d + 1 (or d + 2, ...) from its argument, so iterated operators
consume jet order one derivative at a time and fail with
:class:`~bundlecalc.errors.CapabilityError` when the base fields run out.
"""

import threading
import weakref

import numpy as np

from . import jets
from .errors import CapabilityError, ShapeError
from .fields import TensorSection, inner_jet, point_key
from .geometry import christoffel_from_metric, sqrt_det_jet
from .jets import JetField


class OperatorContext:
    """Cached base-field jets (g, g^-1, sqrt det g, Gamma, A, h) for one bundle."""

    def __init__(self, bundle):
        self.bundle = bundle
        self.manifold = bundle.base
        self._cache = {}
        self._lock = threading.Lock()

    def _get(self, name, points, order, build):
        pts = self.manifold.check_points(points)
        key = (name, point_key(pts))
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None and hit.order >= order:
            return hit.truncate(order)
        out = build(pts, order)
        with self._lock:
            if len(self._cache) > 64:
                self._cache.clear()
            self._cache[key] = out
        return out

    def metric(self, points, order):
        return self._get("g", points, order, self.manifold.metric.eval)

    def inverse_metric(self, points, order):
        return self._get("ginv", points, order,
                         lambda p, o: jets.inverse(self.metric(p, o), p))

    def sqrt_det(self, points, order):
        return self._get("sqrtdet", points, order, lambda p, o: sqrt_det_jet(self.metric(p, o)))

    def christoffel(self, points, order):
        def build(p, o):
            if o + 1 > self.manifold.metric.max_order:
                raise CapabilityError(
                    f"{self.manifold.label}: Christoffel jets of order {o} need metric "
                    f"order {o + 1}, beyond max_order {self.manifold.metric.max_order}")
            return christoffel_from_metric(self.metric(p, o + 1), p)
        return self._get("gamma", points, order, build)

    def connection(self, points, order):
        return self._get("A", points, order, self.bundle.connection.eval)

    def fiber_metric(self, points, order):
        return self._get("h", points, order, self.bundle.fiber_metric.eval)


_contexts = weakref.WeakKeyDictionary()
_contexts_lock = threading.Lock()


def context_for(bundle):
    with _contexts_lock:
        ctx = _contexts.get(bundle)
        if ctx is None:
            ctx = _contexts[bundle] = OperatorContext(bundle)
        return ctx


# jet-level kernels -----------------------------------------------------------------

def nabla_jet(F, k, l, ctx, points, order):
    """Components of nabla F at ``order`` from a jet F of order ``order + 1``.

    (nabla F)^{I a}_{J c} = d_c F + sum_t Gamma^{i_t}_{c s} F^{..s..}
                            - sum_t Gamma^s_{c j_t} F_{..s..} + (A_c)^a_b F^b,
    with the new covariant index c placed last before the fiber index.
    """
    n = F.n
    rank = k + l + 1
    labels = list(range(rank))
    c, s = rank, rank + 1
    fiber = labels[-1]
    out = labels[:-1] + [c, fiber]

    result = jets.stack([F.diff(axis) for axis in range(n)], axis=k + l)
    Fo = F.truncate(order)
    if k + l:
        gamma = ctx.christoffel(points, order)
        for t in range(k + l):
            src = list(labels)
            src[t] = s
            if t < k:
                result = result + jets.einsum(gamma, [labels[t], c, s], Fo, src, out)
            else:
                result = result - jets.einsum(gamma, [s, c, labels[t]], Fo, src, out)
    A = ctx.connection(points, order)
    if A.coeffs.any():
        src = list(labels)
        src[-1] = s
        result = result + jets.einsum(A, [c, fiber, s], Fo, src, out)
    return result


def trace_jet(H, k, l, ginv):
    """g^{pq} H_{..pq}: contract the last two covariant slots."""
    rank = k + l + 1
    labels = list(range(rank))
    p, q = labels[k + l - 2], labels[k + l - 1]
    out = labels[:k + l - 2] + [labels[-1]]
    return jets.einsum(ginv, [p, q], H, labels, out)


# section-level operators --------------------------------------------------------------

def _derived(F, k, l, func, depth, label, support=None):
    n, r = F.base.dim, F.bundle.rank
    shape = (n,) * (k + l) + (r,)
    field = JetField(shape, func, max_order=F.max_order - depth, label=label)
    return TensorSection(k, l, F.bundle, field, support or F.support, F.margin,
                         label=label, seed=F.seed)


def covariant_derivative(F):
    """nabla F as a section of T^(k, l+1) (x) E."""
    ctx = context_for(F.bundle)
    k, l = F.ranks
    if F.max_order < 1:
        raise CapabilityError(
            f"nabla({F.label}) needs {F.label} at order 1, but it supports only "
            f"order <= {F.max_order}")

    def func(points, order):
        if order + 1 > F.max_order:
            raise CapabilityError(
                f"nabla({F.label}) at order {order} needs {F.label} at order {order + 1}, "
                f"but it supports only order <= {F.max_order}")
        return nabla_jet(F.jet(points, order + 1), k, l, ctx, points, order)

    return _derived(F, k, l + 1, func, 1, f"nabla({F.label})")


def iterated_derivative(F, s):
    if s < 0:
        raise ShapeError("derivative order must be nonnegative")
    for _ in range(s):
        F = covariant_derivative(F)
    return F


def metric_trace(H):
    """Contract the last two covariant indices of H with g^{pq}."""
    k, l = H.ranks
    if l < 2:
        raise ShapeError(f"metric trace needs two covariant slots, {H.label} has {l}")
    ctx = context_for(H.bundle)

    def func(points, order):
        return trace_jet(H.jet(points, order), k, l, ctx.inverse_metric(points, order))

    return _derived(H, k, l - 2, func, 0, f"tr({H.label})")


def trace_nabla(G):
    """(tr_g o nabla) G, lowering the covariant rank by one."""
    return metric_trace(covariant_derivative(G))


def interior_normal(H, face, x):
    """Values of iota_nu H = nu^q H_{..q} at face points ``x``."""
    k, l = H.ranks
    if l < 1:
        raise ShapeError(f"interior multiplication needs a covariant slot, {H.label} has none")
    pts = H.base.check_points(x)
    nu = face.outward_unit_normal(pts)
    values = H.jet(pts, 0).value
    return np.einsum("p...qa,pq->p...a", values, nu)


def formal_adjoint(G, s=None):
    """(nabla^s)* G = (-1)^s (tr_g o nabla)^s G for G in T^(k, l+s) (x) E."""
    if s is None:
        s = G.l
    if s < 0 or s > G.l:
        raise ShapeError(f"cannot apply the order-{s} adjoint to a section with {G.l} covariant slots")
    for _ in range(s):
        G = trace_nabla(G)
    return G.scaled(-1.0) if s % 2 else G


def formal_adjoint_divergence_form(G):
    """First-order adjoint in divergence form, for cross-checking ``formal_adjoint``.

    ((nabla)* G)^a = -[ (1/sqrt det g) d_p (sqrt det g g^{pq} G^a_q) + g^{pq} (A_p)^a_b G^b_q ]
    """
    k, l = G.ranks
    if (k, l) != (0, 1):
        raise ShapeError("the divergence form is implemented for E-valued 1-forms only")
    ctx = context_for(G.bundle)
    n = G.base.dim

    def func(points, order):
        Gj = G.jet(points, order + 1)
        ginv = ctx.inverse_metric(points, order + 1)
        vol = ctx.sqrt_det(points, order + 1)
        W = jets.einsum(ginv, [0, 1], Gj, [1, 2], [0, 2])          # W^p_a = g^{pq} G_qa
        flux = W * jets.Jet(vol.coeffs[:, None, None, :], n, vol.order)
        div = None
        for p in range(n):
            term = jets.Jet(flux.coeffs[:, p], n, flux.order).diff(p)
            div = term if div is None else div + term
        div = div / jets.Jet(vol.truncate(order).coeffs[:, None, :], n, order)
        A = ctx.connection(points, order)
        conn = jets.einsum(A, [0, 1, 2], W.truncate(order), [0, 2], [1])
        return -(div + conn)

    return _derived(G, 0, 0, func, 1, f"divadj({G.label})")


def bochner_laplacian(u):
    """Delta_B u = -tr_g(nabla nabla u); same tensor ranks as u."""
    return metric_trace(covariant_derivative(covariant_derivative(u))).scaled(-1.0)


def bochner_power(u, k):
    """Delta_B^k u by k-fold composition."""
    if k < 0:
        raise ShapeError("Laplacian power must be nonnegative")
    for _ in range(k):
        u = bochner_laplacian(u)
    return u


def bochner_power_trace_form(u, k):
    """(-1)^k tr_g^(k)(nabla^{2k} u): k successive contractions of the last index pairs."""
    H = iterated_derivative(u, 2 * k)
    for _ in range(k):
        H = metric_trace(H)
    return H.scaled(-1.0) if k % 2 else H


def inner_product_section(F, G):
    """<F, G> as a scalar field (jet-evaluable)."""
    if F.ranks != G.ranks or F.bundle is not G.bundle:
        raise ShapeError(f"inner product of sections with ranks {F.ranks} and {G.ranks}")
    ctx = context_for(F.bundle)
    k, l = F.ranks

    def at(points, order):
        return inner_jet(F.jet(points, order), G.jet(points, order), k, l,
                         ctx.metric(points, order), ctx.inverse_metric(points, order),
                         ctx.fiber_metric(points, order))
    return at
