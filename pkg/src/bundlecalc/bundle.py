"""Vector-bundle data over a chart: fiber metric, connection, curvature."""

import re
from dataclasses import dataclass, field

import numpy as np

from . import jets
from .errors import DegeneracyError, DomainError, ShapeError
from .expressions import Expression
from .geometry import check_periodicity
from .jets import Jet, JetField

BUNDLE_CATALOG = ("trivial_line", "rot2", "conformal{r}")

# 90 degree rotation; skew, so A_i = alpha_i J is compatible with h = I
ROTATION = np.array([[0.0, -1.0], [1.0, 0.0]])


@dataclass(frozen=True, eq=False)
class BundleData:
    """Rank-r bundle over ``base``.

    ``connection`` has value shape (n, r, r) with ``A[c, a, b] = (A_c)^a_b``,
    i.e. ``nabla_{d_c} e_b = (A_c)^a_b e_a``.
    """
    base: object
    rank: int
    fiber_metric: JetField
    connection: JetField
    label: str = "bundle"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        r, n = self.rank, self.base.dim
        if self.fiber_metric.shape != (r, r):
            raise ShapeError("fiber metric must be an r x r matrix field")
        if self.connection.shape != (n, r, r):
            raise ShapeError("connection must have value shape (n, r, r)")

    @property
    def max_order(self):
        return min(self.fiber_metric.max_order, self.connection.max_order)


@dataclass(frozen=True)
class BundleCurvature:
    """``F[:, i, j, a, b] = (F_ij)^a_b``; antisymmetric in (i, j)."""
    F: np.ndarray


def compatibility_residual(B, points):
    """max |d_i h_ab - (A_i)^c_a h_cb - (A_i)^c_b h_ac| over ``points``."""
    pts = B.base.check_points(points)
    h = B.fiber_metric.eval(pts, 1)
    A = B.connection.eval(pts, 0).value                     # (P, n, r, r)
    hv = h.value
    dh = np.stack([h.diff(c).value for c in range(B.base.dim)], axis=1)
    Ah = np.einsum("pica,pcb->piab", A, hv)
    res = dh - Ah - np.swapaxes(Ah, 2, 3)
    return float(np.abs(res).max()) if res.size else 0.0


def bundle_curvature(B, x):
    """F_ij = d_i A_j - d_j A_i + [A_i, A_j] at the given points."""
    pts = B.base.check_points(x)
    A = B.connection.eval(pts, 1)
    Av = A.value
    dA = np.stack([A.diff(c).value for c in range(B.base.dim)], axis=1)  # dA[:, i, j] = d_i A_j
    comm = np.einsum("piab,pjbc->pijac", Av, Av)
    F = dA - np.swapaxes(dA, 1, 2) + comm - np.swapaxes(comm, 1, 2)
    return BundleCurvature(F)


def fiber_metric_equivalence_constants(h, h_tilde, points):
    """Sampled constants (c, C) with c h(v,v) <= h~(v,v) <= C h(v,v).

    ``h`` and ``h_tilde`` are JetFields (or arrays of shape (P, r, r)).
    c and C are the extreme generalized eigenvalues of (h~, h) over the sample.
    """
    H = _matrix_values(h, points)
    Ht = _matrix_values(h_tilde, points)
    if H.shape != Ht.shape:
        raise ShapeError(f"fiber metric ranks differ: {H.shape[1:]} vs {Ht.shape[1:]}")
    try:
        L = np.linalg.cholesky(H)
        np.linalg.cholesky(Ht)
    except np.linalg.LinAlgError:
        raise DegeneracyError("a fiber metric sample is not positive definite") from None
    Linv = np.linalg.inv(L)
    S = Linv @ Ht @ np.swapaxes(Linv, 1, 2)
    eig = np.linalg.eigvalsh(0.5 * (S + np.swapaxes(S, 1, 2)))
    return float(eig[:, 0].min()), float(eig[:, -1].max())


def _matrix_values(h, points):
    if isinstance(h, JetField):
        return h.eval(points, 0).value
    return np.asarray(h, dtype=float)


# catalog -----------------------------------------------------------------------

def _constant_matrix_field(matrix, n, shape, max_order, label):
    matrix = np.asarray(matrix, dtype=float)

    def func(points, order):
        return Jet.constant(np.broadcast_to(matrix, (points.shape[0],) + shape).copy(),
                            n, order, batch=points.shape[0])
    return JetField(shape, func, max_order=max_order, label=label)


def trivial_bundle(M, rank=1, label=None):
    n = M.dim
    h = _constant_matrix_field(np.eye(rank), n, (rank, rank), M.max_order, "h")
    A = _constant_matrix_field(np.zeros((n, rank, rank)), n, (n, rank, rank), M.max_order, "A")
    return BundleData(M, rank, h, A, label=label or ("trivial_line" if rank == 1 else f"trivial{rank}"))


def default_alpha(M):
    c = M.coords
    n = len(c)
    return tuple(f"0.3*cos({c[(i + 1) % n]}) + 0.2*sin({c[i]})" for i in range(n))


def default_phi(M):
    c = M.coords
    return f"0.3*sin({c[0]}) + 0.2*cos({c[-1]})"


def rot2(M, alpha=None):
    """Rank 2, h = I, A_i = alpha_i J with J the quarter-turn rotation."""
    alpha = tuple(alpha) if alpha else default_alpha(M)
    if len(alpha) != M.dim:
        raise ShapeError(f"rot2 needs {M.dim} alpha expressions, got {len(alpha)}")
    exprs = [a if isinstance(a, Expression) else Expression(a, M.coords) for a in alpha]
    n = M.dim

    def conn(points, order):
        coeffs = np.stack([e.jet(points, order).coeffs for e in exprs], axis=1)  # (P, n, T)
        return Jet(np.einsum("pct,ab->pcabt", coeffs, ROTATION), n, order)

    h = _constant_matrix_field(np.eye(2), n, (2, 2), M.max_order, "h")
    A = JetField((n, 2, 2), conn, max_order=M.max_order, label="rot2.A")
    B = BundleData(M, 2, h, A, label="rot2", params={"alpha": [e.source for e in exprs]})
    check_periodicity(M, lambda p: B.connection.eval(p, 0).value)
    return B


def conformal(M, rank=2, phi=None):
    """h = exp(2 phi) I_r with A_i = (d_i phi) I_r."""
    phi = phi or default_phi(M)
    expr = phi if isinstance(phi, Expression) else Expression(phi, M.coords)
    n = M.dim
    eye = np.eye(rank)

    def metric(points, order):
        e = jets.exp(expr.jet(points, order) * 2.0)
        return Jet(np.einsum("pt,ab->pabt", e.coeffs, eye), n, order)

    def conn(points, order):
        f = expr.jet(points, order + 1)
        d = np.stack([f.diff(c).coeffs for c in range(n)], axis=1)
        return Jet(np.einsum("pct,ab->pcabt", d, eye), n, order)

    h = JetField((rank, rank), metric, max_order=M.max_order, label=f"conformal{rank}.h")
    A = JetField((n, rank, rank), conn, max_order=M.max_order, label=f"conformal{rank}.A")
    B = BundleData(M, rank, h, A, label=f"conformal{rank}", params={"phi": expr.source})
    check_periodicity(M, lambda p: B.fiber_metric.eval(p, 0).value)
    return B


def make_bundle(name, M, params=None):
    params = dict(params or {})
    if name == "trivial_line":
        return trivial_bundle(M, 1)
    if name == "rot2":
        alpha = params.get("alpha")
        if isinstance(alpha, str):
            alpha = [a.strip() for a in alpha.split(",")]
        return rot2(M, alpha)
    m = re.fullmatch(r"conformal(\d+)", name)
    if m:
        return conformal(M, int(m.group(1)), params.get("phi"))
    raise DomainError(f"unknown bundle {name!r}")
