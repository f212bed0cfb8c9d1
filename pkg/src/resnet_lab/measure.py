"""Equal-weight particle measures: Wasserstein-2 distances, path metrics and
the admissibility diagnostics of a parameter-path ensemble."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .continuum import ParamPathEnsemble
from .errors import ContractViolation

EXACT_LIMIT = 256


@dataclass(eq=False)
class EmpiricalMeasure:
    """``M`` equally weighted points in ``R^k``."""

    particles: np.ndarray

    def __post_init__(self):
        pts = np.array(self.particles, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ContractViolation(f"need a non-empty (M, k) point cloud, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ContractViolation("particle coordinates must be finite")
        self.particles = pts

    @property
    def M(self):
        return self.particles.shape[0]

    @property
    def k(self):
        return self.particles.shape[1]


def _cloud(a):
    return a.particles if isinstance(a, EmpiricalMeasure) else EmpiricalMeasure(a).particles


def _pair(a, b):
    a, b = _cloud(a), _cloud(b)
    if a.shape[0] != b.shape[0]:
        raise ContractViolation(f"equal particle counts required, got {a.shape[0]} and {b.shape[0]}")
    if a.shape[1] != b.shape[1]:
        raise ContractViolation(f"dimension mismatch {a.shape[1]} vs {b.shape[1]}")
    return a, b


def squared_costs(a, b):
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def w2_exact(a, b):
    """W2 between two equal-size clouds via an optimal assignment on squared costs."""
    a, b = _pair(a, b)
    if a.shape[0] > EXACT_LIMIT:
        raise ContractViolation(
            f"exact W2 is limited to M <= {EXACT_LIMIT} (got {a.shape[0]}); use w2_sliced instead"
        )
    cost = squared_costs(a, b)
    rows, cols = linear_sum_assignment(cost)
    return float(np.sqrt(max(cost[rows, cols].sum() / a.shape[0], 0.0)))


def w1d(u, v):
    """Exact W2 between two equal-size samples on the line."""
    return float(np.sqrt(np.mean((np.sort(u) - np.sort(v)) ** 2)))


def w2_sliced(a, b, n_projections=64, seed=0):
    """Root-mean-square of 1-D W2 distances over random unit directions."""
    a, b = _pair(a, b)
    if n_projections < 1:
        raise ContractViolation("need at least one projection")
    k = a.shape[1]
    if k == 1:
        return w1d(a[:, 0], b[:, 0])
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((n_projections, k))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    pa = np.sort(a @ dirs.T, axis=0)
    pb = np.sort(b @ dirs.T, axis=0)
    return float(np.sqrt(np.mean((pa - pb) ** 2)))


def w2(a, b):
    a, b = _pair(a, b)
    return w2_exact(a, b) if a.shape[0] <= EXACT_LIMIT else w2_sliced(a, b, n_projections=256)


def _check_grids(A: ParamPathEnsemble, B: ParamPathEnsemble):
    if A.values.shape != B.values.shape:
        raise ContractViolation(f"ensembles live on different grids: {A.values.shape} vs {B.values.shape}")


def node_distances(A: ParamPathEnsemble, B: ParamPathEnsemble):
    _check_grids(A, B)
    return np.array([w2(a, b) for a, b in zip(A.values, B.values)])


def d1(A: ParamPathEnsemble, B: ParamPathEnsemble):
    """``sup_t W2(rho_A(t), rho_B(t))`` over the depth nodes."""
    return float(node_distances(A, B).max())


def d2(snapshots_a, snapshots_b):
    """Maximum of :func:`d1` over paired pseudo-time snapshots (diagnostic only)."""
    if len(snapshots_a) != len(snapshots_b) or not snapshots_a:
        raise ContractViolation("need equally many, and at least one, snapshots")
    return max(d1(a, b) for a, b in zip(snapshots_a, snapshots_b))


def second_moment(ens: ParamPathEnsemble, node=None):
    """``(1/M) sum_m |theta_m(t_j)|^2`` at one node, or its trapezoid integral over [0, 1]."""
    per_node = np.sum(ens.values ** 2, axis=(1, 2)) / ens.M
    if node is not None:
        return float(per_node[node])
    return float(ens.grid.trapezoid_weights() @ per_node)


@dataclass
class AdmissibilityReport:
    sup_second_moment: float
    path_increment: float
    L_used: int
    sub_node: bool = False


def path_increment(ens: ParamPathEnsemble, L):
    """``(1/M) sum_l sum_m int_{l/L}^{(l+1)/L} |theta_m(t) - theta_m(l/L)|^2 dt``.

    The integrand is piecewise quadratic between the union of depth nodes and
    layer boundaries, so Simpson's rule on that merged partition is exact for
    the piecewise-linear path representation.
    """
    if L < 1:
        raise ContractViolation(f"L must be positive, got {L}")
    N = ens.n_intervals
    # integer breakpoints on the common refinement 1/(N L)
    cuts = np.union1d(np.arange(N + 1) * L, np.arange(L + 1) * N) / (N * L)
    left, right = cuts[:-1], cuts[1:]
    mid = 0.5 * (left + right)
    layer = np.minimum(np.floor(left * L + 1e-9).astype(int), L - 1)
    anchor = ens.at(layer / L)
    total = 0.0
    for t, w in ((left, 1.0), (mid, 4.0), (right, 1.0)):
        diff = ens.at(t) - anchor
        total += w * np.sum(diff ** 2, axis=(1, 2)) @ (right - left) / 6.0
    return float(total / ens.M)


def admissibility_report(ens: ParamPathEnsemble, L):
    per_node = np.sum(ens.values ** 2, axis=(1, 2)) / ens.M
    return AdmissibilityReport(
        sup_second_moment=float(per_node.max()),
        path_increment=path_increment(ens, L),
        L_used=int(L),
        sub_node=L >= ens.n_intervals,
    )
