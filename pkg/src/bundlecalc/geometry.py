"""Chart-level Riemannian data.

A :class:`ChartManifold` is a single coordinate box, possibly periodic along
some axes, carrying a metric given as a :class:`~bundlecalc.jets.JetField`.
Everything else here (inverse metric, volume density, Christoffel symbols,
curvature, boundary normals) is derived from the metric jets.
"""

import math
import re
from dataclasses import dataclass

import numpy as np

from . import jets
from .errors import CapabilityError, DegeneracyError, DomainError, ParameterError
from .expressions import Expression
from .jets import DEFAULT_MAX_ORDER, Jet, JetField

TWO_PI = 2.0 * math.pi
DEFAULT_COORDS = ("x", "y", "z", "w")


@dataclass(frozen=True, eq=False)
class ChartManifold:
    dim: int
    domain: tuple
    periodic: tuple
    metric: JetField
    label: str = "chart"
    coords: tuple = None

    def __post_init__(self):
        if self.dim < 1:
            raise ParameterError("dimension must be positive")
        domain = tuple((float(a), float(b)) for a, b in self.domain)
        if len(domain) != self.dim or len(self.periodic) != self.dim:
            raise ParameterError("domain and periodic flags must have one entry per axis")
        if any(b <= a for a, b in domain):
            raise ParameterError("every axis interval must have positive length")
        object.__setattr__(self, "domain", domain)
        object.__setattr__(self, "periodic", tuple(bool(p) for p in self.periodic))
        if self.coords is None:
            object.__setattr__(self, "coords", DEFAULT_COORDS[:self.dim])
        if self.metric.shape != (self.dim, self.dim):
            raise ParameterError("metric must be an n x n matrix field")

    @property
    def lengths(self):
        return tuple(b - a for a, b in self.domain)

    @property
    def is_closed(self):
        return all(self.periodic)

    @property
    def max_order(self):
        return self.metric.max_order

    def check_points(self, points):
        """Return ``points`` as a (P, n) array, rejecting points off the closed box."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[-1] != self.dim:
            raise DomainError(f"{self.label}: points must have {self.dim} coordinates")
        for axis, (a, b) in enumerate(self.domain):
            slack = 1e-12 * max(1.0, abs(a), abs(b))
            bad = (pts[:, axis] < a - slack) | (pts[:, axis] > b + slack)
            if np.any(bad):
                where = pts[int(np.argmax(bad))].tolist()
                raise DomainError(f"{self.label}: point {where} lies outside the chart domain")
        return pts

    def sample_points(self, count, seed=0, margin=0.0):
        """Seeded uniform points in the box, ``margin`` away from faces."""
        rng = np.random.default_rng(seed)
        lo = np.array([a + (0.0 if p else margin) for (a, _), p in zip(self.domain, self.periodic)])
        hi = np.array([b - (0.0 if p else margin) for (_, b), p in zip(self.domain, self.periodic)])
        return lo + (hi - lo) * rng.random((count, self.dim))


@dataclass(frozen=True, eq=False)
class BoundaryFace:
    manifold: ChartManifold
    axis: int
    side: str

    @property
    def position(self):
        a, b = self.manifold.domain[self.axis]
        return a if self.side == "low" else b

    @property
    def sign(self):
        return -1.0 if self.side == "low" else 1.0

    @property
    def tangential_axes(self):
        return tuple(i for i in range(self.manifold.dim) if i != self.axis)

    def outward_unit_normal(self, points):
        """Components nu^j = +-g^{jd} / sqrt(g^{dd}) at face points, shape (P, n)."""
        g = metric_jet(self.manifold, points, 0).value
        ginv = np.linalg.inv(g)
        col = ginv[:, :, self.axis]
        return self.sign * col / np.sqrt(col[:, self.axis])[:, None]

    def induced_density(self, points):
        """sqrt(det g~) where g~ is the tangential block of g; 1 in dimension one."""
        pts = np.atleast_2d(points)
        if self.manifold.dim == 1:
            return np.ones(pts.shape[0])
        g = metric_jet(self.manifold, pts, 0).value
        t = list(self.tangential_axes)
        sub = g[:, t][:, :, t]
        d = np.linalg.det(sub)
        if np.any(d <= 0):
            raise DegeneracyError(f"{self.manifold.label}: induced face metric is degenerate")
        return np.sqrt(d)

    def __repr__(self):
        return f"BoundaryFace(axis={self.axis}, side={self.side!r})"


@dataclass(frozen=True)
class CurvatureData:
    """Riemann ``R[l, i, j, k] = R^l_{ijk}`` and Ricci ``Ric[j, k]`` at a batch of points."""
    riemann: np.ndarray
    ricci: np.ndarray


def metric_jet(M, x, order):
    pts = M.check_points(x)
    return M.metric.eval(pts, order)


def inverse_metric_jet(g, points=None):
    return jets.inverse(g, points)


def sqrt_det_jet(g):
    d = jets.det(g)
    if np.any(d.value <= 0):
        raise DegeneracyError("metric determinant is not positive")
    return jets.sqrt(d)


def christoffel_jet(M, x, order):
    """Gamma[k, i, j] = Gamma^k_{ij} of the Levi-Civita connection, to ``order``."""
    if order + 1 > M.metric.max_order:
        raise CapabilityError(
            f"{M.label}: Christoffel symbols of order {order} need metric jets of "
            f"order {order + 1}, but max_order is {M.metric.max_order}")
    pts = M.check_points(x)
    g = M.metric.eval(pts, order + 1)
    return christoffel_from_metric(g, pts)


def christoffel_from_metric(g, points=None):
    n = g.n
    ginv = jets.inverse(g.truncate(g.order - 1), points)
    dg = jets.stack([g.diff(c) for c in range(n)], axis=0)      # dg[c, i, j] = d_c g_ij
    first = dg.map(lambda c: c + np.swapaxes(c, 1, 2) - np.moveaxis(c, 1, 3))
    # first[i, j, l] = d_i g_jl + d_j g_il - d_l g_ij
    return jets.einsum(ginv, [0, 1], first, [2, 3, 1], [0, 2, 3]) * 0.5


def curvature(M, x):
    pts = M.check_points(x)
    gamma = christoffel_jet(M, pts, 1)
    return curvature_from_christoffel(gamma)


def curvature_from_christoffel(gamma):
    n = gamma.n
    G = gamma.value                                      # G[l, i, j]
    dG = np.stack([gamma.diff(c).value for c in range(n)], axis=1)   # dG[:, c, l, j, k]
    dG = np.moveaxis(dG, 1, 2)                           # dG[:, l, c, j, k] = d_c Gamma^l_jk
    riemann = (dG - np.swapaxes(dG, 2, 3)
               + np.einsum("plim,pmjk->plijk", G, G)
               - np.einsum("pljm,pmik->plijk", G, G))
    ricci = np.einsum("piijk->pjk", riemann)
    return CurvatureData(riemann, ricci)


def boundary_data(M):
    faces = []
    for axis, periodic in enumerate(M.periodic):
        if not periodic:
            faces.append(BoundaryFace(M, axis, "low"))
            faces.append(BoundaryFace(M, axis, "high"))
    return faces


# construction helpers --------------------------------------------------------

def expression_matrix_field(entries, coords, shape, max_order=DEFAULT_MAX_ORDER, label="field"):
    """Matrix field from a dict ``{(i, j): Expression}``; missing entries are zero."""
    exprs = {key: e if isinstance(e, Expression) else Expression(str(e), coords)
             for key, e in entries.items()}

    def func(points, order):
        P, n = points.shape
        c = np.zeros((P,) + tuple(shape) + (jets.size(n, order),))
        cache = {}
        for key, expr in exprs.items():
            if expr.source not in cache:
                cache[expr.source] = expr.jet(points, order).coeffs
            c[(slice(None),) + key] = cache[expr.source]
        return Jet(c, n, order)

    field = JetField(shape, func, max_order=max_order, label=label)
    field.expressions = exprs
    return field


def metric_from_expressions(entries, coords, max_order=DEFAULT_MAX_ORDER, label="metric"):
    """Symmetric metric field; ``entries`` maps (i, j) with i <= j to expressions."""
    n = len(coords)
    full = {}
    for (i, j), e in entries.items():
        full[(i, j)] = e
        full[(j, i)] = e
    return expression_matrix_field(full, coords, (n, n), max_order=max_order, label=label)


def check_metric(M, points, tol=1e-14):
    """Sampled symmetry / positive-definiteness check; raises DegeneracyError."""
    g = metric_jet(M, points, 0).value
    asym = np.abs(g - np.swapaxes(g, 1, 2)).max()
    if asym > tol:
        raise DegeneracyError(f"{M.label}: metric is not symmetric (defect {asym:.3g})")
    eig = np.linalg.eigvalsh(g)
    if np.any(eig[:, 0] <= 0):
        bad = np.atleast_2d(points)[int(np.argmin(eig[:, 0]))]
        raise DegeneracyError(f"{M.label}: metric not positive definite at {bad.tolist()}")
    return eig[:, 0].min()


def check_periodicity(M, evaluate, samples=16, seed=0, tol=1e-12):
    """Spot-check ``evaluate(points)`` agrees across every periodic seam."""
    pts = M.sample_points(samples, seed=seed)
    worst = 0.0
    for axis, (a, b) in enumerate(M.domain):
        if not M.periodic[axis]:
            continue
        lo, hi = pts.copy(), pts.copy()
        lo[:, axis] = a
        hi[:, axis] = b
        diff = np.abs(np.asarray(evaluate(lo)) - np.asarray(evaluate(hi))).max()
        worst = max(worst, diff)
        if diff > tol:
            raise DomainError(f"{M.label}: field is not periodic along axis {axis} "
                              f"(seam mismatch {diff:.3g})")
    return worst


# catalog -----------------------------------------------------------------------

MANIFOLD_CATALOG = ("flat_torus{n}", "warped_torus2", "sphere_chart", "interval{g}",
                    "annulus", "custom")


def _chart(label, domain, periodic, entries, coords, max_order):
    metric = metric_from_expressions(entries, coords, max_order=max_order,
                                     label=f"{label}.metric")
    M = ChartManifold(len(coords), domain, periodic, metric, label=label, coords=tuple(coords))
    check_periodicity(M, lambda p: metric_jet(M, p, 0).value)
    return M


def flat_torus(n=2, max_order=DEFAULT_MAX_ORDER):
    coords = DEFAULT_COORDS[:n] if n <= 4 else tuple(f"x{i}" for i in range(n))
    return _chart(f"flat_torus{n}", [(0.0, TWO_PI)] * n, [True] * n,
                  {(i, i): "1" for i in range(n)}, coords, max_order)


def warped_torus2(max_order=DEFAULT_MAX_ORDER):
    return _chart("warped_torus2", [(0.0, TWO_PI)] * 2, [True, True],
                  {(0, 0): "1 + 0.5*sin(x)", (1, 1): "1 + 0.5*cos(y)"},
                  ("x", "y"), max_order)


def sphere_chart(max_order=DEFAULT_MAX_ORDER):
    """Unit sphere in (theta, phi), theta kept away from the poles."""
    return _chart("sphere_chart", [(0.2, math.pi - 0.2), (0.0, TWO_PI)], [False, True],
                  {(0, 0): "1", (1, 1): "sin(theta)^2"}, ("theta", "phi"), max_order)


def interval(g="1", max_order=DEFAULT_MAX_ORDER):
    return _chart("interval", [(0.0, 1.0)], [False], {(0, 0): g}, ("x",), max_order)


def annulus(max_order=DEFAULT_MAX_ORDER):
    return _chart("annulus", [(1.0, 2.0), (0.0, TWO_PI)], [False, True],
                  {(0, 0): "1", (1, 1): "r^2"}, ("r", "phi"), max_order)


def custom_chart(domain, periodic, entries, coords=None, label="custom",
                 max_order=DEFAULT_MAX_ORDER):
    coords = tuple(coords) if coords else DEFAULT_COORDS[:len(domain)]
    return _chart(label, domain, periodic, entries, coords, max_order)


def make_manifold(name, params=None, max_order=DEFAULT_MAX_ORDER):
    """Build a catalog chart by name (``flat_torus2``, ``annulus``, ...)."""
    params = dict(params or {})
    m = re.fullmatch(r"flat_torus(\d+)", name)
    if m:
        return flat_torus(int(m.group(1)), max_order=max_order)
    if name == "warped_torus2":
        return warped_torus2(max_order)
    if name == "sphere_chart":
        return sphere_chart(max_order)
    if name == "annulus":
        return annulus(max_order)
    if name == "interval":
        return interval(params.get("g", "1"), max_order)
    raise DomainError(f"unknown manifold {name!r}")
