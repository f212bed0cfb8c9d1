"""Finite-depth, finite-width ResNet.

The forward recursion is ``Z(l+1) = Z(l) + (1/(M L)) sum_m f(Z(l), theta[l, m])``
with ``Z(0) = x``.  The adjoint array ``p`` is indexed so that ``p[l]`` is the
derivative of the per-sample cost with respect to ``Z(l+1)``; with that
convention ``dE/dtheta[l, m] = (1/(M L)) mean_i J_theta(Z(l; x_i), theta[l, m])^T p[l; x_i]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .activation import ActivationFamily
from .dataset import Dataset, MeasuringFunction, eval_g
from .errors import ContractViolation, NumericOverflow


@dataclass(eq=False)
class ParamGrid:
    """Parameter table of shape ``(L, M, k)``."""

    theta: np.ndarray

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float)
        if theta.ndim != 3 or theta.shape[0] < 1 or theta.shape[1] < 1:
            raise ContractViolation(f"ParamGrid needs shape (L, M, k) with L, M >= 1; got {theta.shape}")
        if not np.all(np.isfinite(theta)):
            raise ContractViolation("ParamGrid entries must be finite")
        self.theta = theta

    @property
    def L(self):
        return self.theta.shape[0]

    @property
    def M(self):
        return self.theta.shape[1]

    @property
    def k(self):
        return self.theta.shape[2]

    def copy(self):
        return ParamGrid(self.theta.copy())

    def __eq__(self, other):
        return isinstance(other, ParamGrid) and np.array_equal(self.theta, other.theta)

    @classmethod
    def zeros(cls, L, M, family: ActivationFamily):
        return cls(np.zeros((L, M, family.k)))


@dataclass
class DiscreteTrajectory:
    Z: np.ndarray  # (L+1, n, d)
    p: np.ndarray | None = None  # (L, n, d)


def _check(grid: ParamGrid, family: ActivationFamily):
    if grid.k != family.k:
        raise ContractViolation(f"grid has k={grid.k} but the {family.kind} family with d={family.d} needs k={family.k}")


def residual(family: ActivationFamily, z, thetas):
    """Width average ``(1/M) sum_m f(z, theta_m)`` for a batch of states ``z`` (n, d)."""
    return family.width_operator(thetas)(z)


def forward(grid: ParamGrid, family: ActivationFamily, x):
    """States ``Z(0..L)`` with shape ``(L+1, n, d)``, or ``(L+1, d)`` for a single input."""
    _check(grid, family)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    z = np.atleast_2d(x)
    if z.shape[-1] != family.d:
        raise ContractViolation(f"input dimension {z.shape[-1]} does not match family d={family.d}")
    L = grid.L
    ops = family.width_operators(grid.theta)
    Z = np.empty((L + 1,) + z.shape)
    Z[0] = z
    with np.errstate(over="ignore", invalid="ignore"):
        for l in range(L):
            Z[l + 1] = Z[l] + ops[l](Z[l]) / L
            if not np.all(np.isfinite(Z[l + 1])):
                raise NumericOverflow(f"non-finite state after layer {l}", where=l)
    return Z[:, 0] if single else Z


def _residuals(g: MeasuringFunction, ZL, y):
    return eval_g(g, ZL) - np.asarray(y, dtype=float)


def loss(grid: ParamGrid, family: ActivationFamily, g: MeasuringFunction, data: Dataset):
    Z = forward(grid, family, data.x)
    r = _residuals(g, Z[-1], data.y)
    return 0.5 * float(np.mean(r * r))


def regularizer(grid: ParamGrid):
    """``(1/(M L)) sum_{l,m} |theta[l, m]|^2``."""
    return float(np.sum(grid.theta ** 2)) / (grid.L * grid.M)


def loss_regularized(grid, family, g, data, s):
    if s < 0:
        raise ContractViolation(f"pseudo-time must be nonnegative, got s={s}")
    return loss(grid, family, g, data) + np.exp(-s) * regularizer(grid)


def adjoint_backward(grid: ParamGrid, family: ActivationFamily, g: MeasuringFunction, Z, y):
    """Adjoint array ``p`` of shape ``(L, n, d)`` for states ``Z`` from :func:`forward`."""
    _check(grid, family)
    Z = np.asarray(Z, dtype=float)
    single = Z.ndim == 2
    if single:
        Z = Z[:, None, :]
    y = np.atleast_1d(np.asarray(y, dtype=float))
    L = grid.L
    ops = family.width_operators(grid.theta)
    p = np.empty((L,) + Z.shape[1:])
    p[L - 1] = _residuals(g, Z[L], y)[:, None] * g.w
    for l in range(L - 2, -1, -1):
        q = p[l + 1]
        p[l] = q + ops[l + 1].vjp_z(Z[l + 1], q) / L
        if not np.all(np.isfinite(p[l])):
            raise NumericOverflow(f"non-finite adjoint at layer {l}", where=l)
    return p[:, 0] if single else p


def trajectory(grid, family, g, data: Dataset):
    Z = forward(grid, family, data.x)
    return DiscreteTrajectory(Z, adjoint_backward(grid, family, g, Z, data.y))


def loss_and_grad(grid: ParamGrid, family: ActivationFamily, g: MeasuringFunction, data: Dataset):
    """Cost ``E`` and its gradient table ``dE/dtheta`` of shape ``(L, M, k)``."""
    Z = forward(grid, family, data.x)
    r = _residuals(g, Z[-1], data.y)
    p = adjoint_backward(grid, family, g, Z, data.y)
    L, M = grid.L, grid.M
    out = family.param_grad(grid.theta, Z[:-1], p) / (M * L)
    return 0.5 * float(np.mean(r * r)), out


def grad(grid, family, g, data):
    return loss_and_grad(grid, family, g, data)[1]
