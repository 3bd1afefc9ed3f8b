"""Tensor-product quadrature on chart boxes and their boundary faces.

Periodic axes use the uniform (trapezoid) rule with the endpoint dropped,
bounded axes use Gauss-Legendre.  Integrals are taken against the Riemannian
measure sqrt(det g) dx, faces against sqrt(det g~) dx~.
"""

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import BundleCalcError, ParameterError
from .geometry import boundary_data, metric_jet

DEFAULT_PERIODIC_N = 32
DEFAULT_GAUSS_N = 48


def axis_rule(a, b, count, periodic):
    """Nodes and weights for one axis; weights sum to b - a."""
    if count < 1:
        raise ParameterError("every axis needs at least one node")
    if periodic:
        h = (b - a) / count
        return a + h * np.arange(count), np.full(count, h)
    x, w = leggauss(count)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    manifold: object
    counts: tuple
    axes: tuple = None         # restrict to these chart axes (face grids); None means all

    def __post_init__(self):
        axes = tuple(range(self.manifold.dim)) if self.axes is None else tuple(self.axes)
        counts = tuple(int(c) for c in self.counts)
        if len(counts) != len(axes):
            raise ParameterError(f"expected {len(axes)} resolutions, got {len(counts)}")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "counts", counts)
        rules = [axis_rule(*self.manifold.domain[ax], c, self.manifold.periodic[ax])
                 for ax, c in zip(axes, counts)]
        object.__setattr__(self, "rules", tuple(rules))

    @property
    def nodes(self):
        return tuple(r[0] for r in self.rules)

    @property
    def axis_weights(self):
        return tuple(r[1] for r in self.rules)

    @property
    def size(self):
        return int(np.prod(self.counts)) if self.counts else 1

    def tensor_points(self):
        """(P, len(axes)) node coordinates in C order, and the matching product weights."""
        if not self.rules:
            return np.zeros((1, 0)), np.ones(1)
        mesh = np.meshgrid(*self.nodes, indexing="ij")
        pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
        w = self.axis_weights[0]
        for wi in self.axis_weights[1:]:
            w = np.multiply.outer(w, wi)
        return pts, np.asarray(w).reshape(-1)

    @property
    def points(self):
        return self.tensor_points()[0]

    @property
    def weights(self):
        return self.tensor_points()[1]

    def describe(self):
        return "x".join(str(c) for c in self.counts)


@dataclass(frozen=True, eq=False)
class FaceGrid:
    face: object
    grid: QuadratureGrid

    @property
    def points(self):
        """Full chart coordinates of the face nodes."""
        tang, _ = self.grid.tensor_points()
        M = self.face.manifold
        pts = np.empty((tang.shape[0], M.dim))
        pts[:, self.face.axis] = self.face.position
        for col, ax in enumerate(self.face.tangential_axes):
            pts[:, ax] = tang[:, col]
        return pts

    @property
    def weights(self):
        return self.grid.tensor_points()[1]


def default_counts(M):
    return tuple(DEFAULT_PERIODIC_N if p else DEFAULT_GAUSS_N for p in M.periodic)


def make_grid(M, n=None):
    """Interior grid; ``n`` is an int (all axes), a per-axis sequence, or None for defaults."""
    if n is None:
        counts = default_counts(M)
    elif np.ndim(n) == 0:
        counts = (int(n),) * M.dim
    else:
        counts = tuple(int(c) for c in n)
    return QuadratureGrid(M, counts)


def face_grids(M, boundary_n=None):
    """One :class:`FaceGrid` per boundary face; ``[]`` on closed charts."""
    out = []
    for face in boundary_data(M):
        axes = face.tangential_axes
        if boundary_n is None:
            counts = tuple(default_counts(M)[a] for a in axes)
        elif np.ndim(boundary_n) == 0:
            counts = (int(boundary_n),) * len(axes)
        else:
            counts = tuple(int(c) for c in boundary_n)
        out.append(FaceGrid(face, QuadratureGrid(M, counts, axes=axes)))
    return out


def refine(grid, factor):
    """The same rule types with every per-axis count multiplied by ``factor``."""
    if factor < 1:
        raise ParameterError(f"refinement factor must be >= 1, got {factor}")
    if isinstance(grid, FaceGrid):
        return FaceGrid(grid.face, refine(grid.grid, factor))
    counts = tuple(max(1, int(round(c * factor))) for c in grid.counts)
    return QuadratureGrid(grid.manifold, counts, grid.axes)


def volume_density(M, points):
    g = metric_jet(M, points, 0).value
    return np.sqrt(np.linalg.det(g))


def _evaluate(f, points, *args):
    try:
        vals = np.asarray(f(*args, points), dtype=float)
    except BundleCalcError:
        raise
    except Exception as exc:
        raise type(exc)(f"{exc} (while evaluating at nodes such as {points[0].tolist()})") \
            from exc
    return np.broadcast_to(vals, (points.shape[0],))


def integrate(f, grid):
    """sum_i w_i f(x_i) sqrt(det g(x_i)), summed in node order with ``math.fsum``."""
    pts, w = grid.tensor_points()
    vals = _evaluate(f, pts)
    return math.fsum(w * vals * volume_density(grid.manifold, pts))


def integrate_boundary(f, grids):
    """Sum over faces of the face integral of ``f(face, points)`` against sqrt(det g~)."""
    terms = []
    for fg in grids:
        pts = fg.points
        vals = _evaluate(f, pts, fg.face)
        terms.extend(fg.weights * vals * fg.face.induced_density(pts))
    return math.fsum(terms)
