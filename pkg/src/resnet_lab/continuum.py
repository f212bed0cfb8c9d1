"""Continuous-depth ResNet driven by an empirical parameter measure.

Each of the ``M`` particles carries a path ``theta_m(t)`` on ``t in [0, 1]``,
stored at the nodes of a uniform depth grid and interpolated linearly in
between.  The state solves ``dz/dt = (1/M) sum_m f(z, theta_m(t))`` and the
adjoint solves ``dp^T/dt = -p^T (1/M) sum_m d_z f(z, theta_m(t))`` backward
from ``p(1) = (g(Z(1)) - y) grad g``.  Both are integrated with classical RK4
on the same grid.  The adjoint needs ``Z`` at step midpoints; those come from
cubic Hermite interpolation of the stored node values and slopes, which keeps
the adjoint fourth-order accurate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .activation import ActivationFamily
from .dataset import Dataset, MeasuringFunction, eval_g
from .errors import ContractViolation, NumericOverflow


@dataclass(frozen=True)
class DepthGrid:
    n_intervals: int

    def __post_init__(self):
        if int(self.n_intervals) != self.n_intervals or self.n_intervals < 1:
            raise ContractViolation(f"depth grid needs at least one interval, got {self.n_intervals}")

    @property
    def h(self):
        return 1.0 / self.n_intervals

    @property
    def nodes(self):
        return np.arange(self.n_intervals + 1) / self.n_intervals

    @property
    def midpoints(self):
        return (np.arange(self.n_intervals) + 0.5) / self.n_intervals

    def trapezoid_weights(self):
        w = np.full(self.n_intervals + 1, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return w


@dataclass(eq=False)
class ParamPathEnsemble:
    """Node values ``theta_m(t_j)`` with shape ``(N_t + 1, M, k)``."""

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 3 or values.shape[0] < 2 or values.shape[1] < 1:
            raise ContractViolation(f"ensemble needs shape (N_t+1, M, k) with N_t >= 1, M >= 1; got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ContractViolation("ensemble entries must be finite")
        self.values = values

    @property
    def n_intervals(self):
        return self.values.shape[0] - 1

    @property
    def M(self):
        return self.values.shape[1]

    @property
    def k(self):
        return self.values.shape[2]

    @property
    def grid(self):
        return DepthGrid(self.n_intervals)

    def copy(self):
        return ParamPathEnsemble(self.values.copy())

    def __eq__(self, other):
        return isinstance(other, ParamPathEnsemble) and np.array_equal(self.values, other.values)

    def at(self, t):
        """Linear interpolant at times ``t`` (scalar or array); shape ``t.shape + (M, k)``."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > 1):
            raise ContractViolation("depth time outside [0, 1]")
        N = self.n_intervals
        pos = t * N
        idx = np.clip(np.floor(pos).astype(int), 0, N - 1)
        w = (pos - idx)[..., None, None]
        return self.values[idx] * (1.0 - w) + self.values[idx + 1] * w

    @classmethod
    def constant(cls, particles, n_intervals):
        particles = np.asarray(particles, dtype=float)
        return cls(np.repeat(particles[None], n_intervals + 1, axis=0))

    @classmethod
    def zeros(cls, M, n_intervals, family: ActivationFamily):
        return cls(np.zeros((n_intervals + 1, M, family.k)))


@dataclass
class TrajectoryBundle:
    Z: np.ndarray  # (N_t+1, n, d)
    p: np.ndarray  # (N_t+1, n, d)


def _check(ens: ParamPathEnsemble, family: ActivationFamily):
    if ens.k != family.k:
        raise ContractViolation(f"ensemble has k={ens.k} but the {family.kind} family with d={family.d} needs k={family.k}")


def _node_params(ens: ParamPathEnsemble, grid: DepthGrid):
    """Parameters at grid nodes and midpoints, reusing stored values when grids coincide."""
    if grid.n_intervals == ens.n_intervals:
        nodes = ens.values
        with np.errstate(over="ignore", invalid="ignore"):
            mids = 0.5 * (nodes[:-1] + nodes[1:])
    else:
        nodes = ens.at(grid.nodes)
        mids = ens.at(grid.midpoints)
    return nodes, mids


def _operators(ens, family, grid):
    nodes, mids = _node_params(ens, grid)
    return family.width_operators(nodes), family.width_operators(mids)


def _forward(ops, z0, grid):
    with np.errstate(over="ignore", invalid="ignore"):
        return _forward_steps(ops, z0, grid)


def _forward_steps(ops, z0, grid):
    nodes, mids = ops
    N, h = grid.n_intervals, grid.h
    Z = np.empty((N + 1,) + z0.shape)
    F = np.empty_like(Z)
    pre = [None] * (N + 1)
    Z[0] = z0
    for j in range(N):
        z = Z[j]
        pre[j] = nodes[j].preact(z)
        k1 = nodes[j].from_preact(pre[j])
        k2 = mids[j](z + 0.5 * h * k1)
        k3 = mids[j](z + 0.5 * h * k2)
        k4 = nodes[j + 1](z + h * k3)
        F[j] = k1
        Z[j + 1] = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(Z[j + 1])):
            raise NumericOverflow(f"non-finite state at depth node {j + 1}", where=j + 1)
    pre[N] = nodes[N].preact(Z[N])
    F[N] = nodes[N].from_preact(pre[N])
    return Z, F, pre


def _as_batch(family, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    z = np.atleast_2d(x)
    if z.shape[-1] != family.d:
        raise ContractViolation(f"input dimension {z.shape[-1]} does not match family d={family.d}")
    return z, single


def forward_oie(ens: ParamPathEnsemble, family: ActivationFamily, x, grid: DepthGrid | None = None):
    """State path at the grid nodes: ``(N_t+1, n, d)``, or ``(N_t+1, d)`` for one input."""
    _check(ens, family)
    grid = grid or ens.grid
    z, single = _as_batch(family, x)
    Z = _forward(_operators(ens, family, grid), z, grid)[0]
    return Z[:, 0] if single else Z


def _adjoint(ops, g, Z, F, y, grid, pre=None):
    nodes, mids = ops
    N, h = grid.n_intervals, grid.h
    p = np.empty_like(Z)
    p[N] = (eval_g(g, Z[N]) - y)[:, None] * g.w
    if pre is None:
        pre = [op.preact(z) for op, z in zip(nodes, Z)]
    for j in range(N - 1, -1, -1):
        zmid = 0.5 * (Z[j] + Z[j + 1]) + (h / 8.0) * (F[j] - F[j + 1])
        q = p[j + 1]
        k1 = -nodes[j + 1].vjp_z(Z[j + 1], q, pre[j + 1])
        k2 = -mids[j].vjp_z(zmid, q - 0.5 * h * k1)
        k3 = -mids[j].vjp_z(zmid, q - 0.5 * h * k2)
        k4 = -nodes[j].vjp_z(Z[j], q - h * k3, pre[j])
        p[j] = q - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(p[j])):
            raise NumericOverflow(f"non-finite adjoint at depth node {j}", where=j)
    return p


def adjoint_oie(ens, family, g: MeasuringFunction, Z, y, grid: DepthGrid | None = None):
    """Adjoint path at the grid nodes for a state path from :func:`forward_oie`."""
    _check(ens, family)
    grid = grid or ens.grid
    Z = np.asarray(Z, dtype=float)
    single = Z.ndim == 2
    if single:
        Z = Z[:, None, :]
    if Z.shape[0] != grid.n_intervals + 1:
        raise ContractViolation("state path does not match the depth grid")
    ops = _operators(ens, family, grid)
    F = np.stack([op(z) for op, z in zip(ops[0], Z)])
    p = _adjoint(ops, g, Z, F, np.atleast_1d(np.asarray(y, dtype=float)), grid)
    return p[:, 0] if single else p


def trajectories(ens, family, g, data: Dataset, grid: DepthGrid | None = None):
    _check(ens, family)
    grid = grid or ens.grid
    ops = _operators(ens, family, grid)
    Z, F, pre = _forward(ops, data.x, grid)
    return TrajectoryBundle(Z, _adjoint(ops, g, Z, F, data.y, grid, pre))


def second_moment_integral(ens: ParamPathEnsemble):
    """``(1/M) sum_m int_0^1 |theta_m(t)|^2 dt`` by the trapezoid rule on the stored nodes."""
    per_node = np.sum(ens.values ** 2, axis=(1, 2)) / ens.M
    return float(ens.grid.trapezoid_weights() @ per_node)


def loss_continuum(ens, family, g, data: Dataset, grid: DepthGrid | None = None):
    Z1 = forward_oie(ens, family, data.x, grid)[-1]
    r = eval_g(g, Z1) - data.y
    return 0.5 * float(np.mean(r * r))


def loss_regularized_continuum(ens, family, g, data, s, grid=None):
    if s < 0:
        raise ContractViolation(f"pseudo-time must be nonnegative, got s={s}")
    return loss_continuum(ens, family, g, data, grid) + np.exp(-s) * second_moment_integral(ens)


def loss_and_functional_grad(ens, family, g, data: Dataset, s=np.inf, grid: DepthGrid | None = None):
    """Cost ``E`` and the per-particle force table ``G`` of shape ``(N_t+1, M, k)``.

    ``G[j, m] = mean_i J_theta(Z(t_j; x_i), theta_m(t_j))^T p(t_j; x_i) + 2 e^{-s} theta_m(t_j)``,
    which is ``M`` times the functional derivative of ``E_s`` with respect to
    the path ``theta_m`` at ``t_j``.  ``s = inf`` switches the regularizer off.
    """
    _check(ens, family)
    if s < 0:
        raise ContractViolation(f"pseudo-time must be nonnegative, got s={s}")
    grid = grid or ens.grid
    bundle = trajectories(ens, family, g, data, grid)
    nodes, _ = _node_params(ens, grid)
    Z, p = bundle.Z, bundle.p
    G = family.param_grad(nodes, Z, p)
    if np.isfinite(s):
        G = G + 2.0 * np.exp(-s) * nodes
    r = eval_g(g, Z[-1]) - data.y
    return 0.5 * float(np.mean(r * r)), G


def functional_grad(ens, family, g, data, s=np.inf, grid=None):
    return loss_and_functional_grad(ens, family, g, data, s, grid)[1]


def midpoint_data_force(ens, family, g, data: Dataset):
    """Data part of the force table at interval midpoints, shape ``(N_t, M, k)``.

    States and adjoints at the midpoints come from cubic Hermite interpolation,
    so pairing this with the node table gives Simpson-accurate depth integrals.
    """
    _check(ens, family)
    grid = ens.grid
    ops = _operators(ens, family, grid)
    Z, F, pre = _forward(ops, data.x, grid)
    p = _adjoint(ops, g, Z, F, data.y, grid, pre)
    dp = np.stack([-op.vjp_z(z, q, pr) for op, z, q, pr in zip(ops[0], Z, p, pre)])
    h = grid.h
    Zm = 0.5 * (Z[:-1] + Z[1:]) + (h / 8.0) * (F[:-1] - F[1:])
    pm = 0.5 * (p[:-1] + p[1:]) + (h / 8.0) * (dp[:-1] - dp[1:])
    return family.param_grad(_node_params(ens, grid)[1], Zm, pm)
