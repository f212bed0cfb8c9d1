"""Parametric residual maps ``f(z, theta)`` and their Jacobians.

Two families are provided:

``difference``
    ``f(z, theta) = sigma(A z + a) - sigma(B z + b)`` with ``A, B`` of shape
    ``(d, d)`` and ``a, b`` of shape ``(d,)``.  Parameter layout is
    ``[A (row-major), a, B (row-major), b]`` so ``k = 2 d^2 + 2 d``.

``conventional``
    ``f(z, theta) = U sigma(W . z + c)`` with ``W, U`` in ``R^d`` and scalar
    ``c``.  Layout ``[W, U, c]`` so ``k = 2 d + 1``.

``sigma`` is the softplus ``tau * log(1 + exp(u / tau))``, a smooth ReLU.

All functions broadcast over leading batch axes: ``z`` has shape ``(..., d)``
and ``theta`` has shape ``(..., k)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ContractViolation

DIFFERENCE = "difference"
CONVENTIONAL = "conventional"
KINDS = (DIFFERENCE, CONVENTIONAL)


def softplus(u, tau=1.0):
    return tau * np.logaddexp(0.0, np.asarray(u) / tau)


def softplus_prime(u, tau=1.0):
    return expit(np.asarray(u) / tau)


def softplus_second(u, tau=1.0):
    s = expit(np.asarray(u) / tau)
    return s * (1.0 - s) / tau


@dataclass(frozen=True)
class ActivationFamily:
    kind: str = DIFFERENCE
    d: int = 2
    tau: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractViolation(f"unknown activation kind {self.kind!r}; expected one of {KINDS}")
        if int(self.d) != self.d or self.d < 1:
            raise ContractViolation(f"state dimension must be a positive integer, got {self.d}")
        if not self.tau > 0:
            raise ContractViolation(f"tau must be positive, got {self.tau}")

    @property
    def k(self) -> int:
        d = self.d
        return 2 * d * d + 2 * d if self.kind == DIFFERENCE else 2 * d + 1

    def to_dict(self):
        return {"kind": self.kind, "d": self.d, "tau": self.tau}

    @classmethod
    def from_dict(cls, data):
        return cls(kind=data.get("kind", DIFFERENCE), d=int(data["d"]), tau=float(data.get("tau", 1.0)))

    # -- layout helpers -------------------------------------------------

    def split(self, theta):
        """Return the named blocks of ``theta`` as views."""
        theta = np.asarray(theta, dtype=float)
        d = self.d
        lead = theta.shape[:-1]
        if self.kind == DIFFERENCE:
            dd = d * d
            A = theta[..., :dd].reshape(lead + (d, d))
            a = theta[..., dd:dd + d]
            B = theta[..., dd + d:2 * dd + d].reshape(lead + (d, d))
            b = theta[..., 2 * dd + d:]
            return A, a, B, b
        W = theta[..., :d]
        U = theta[..., d:2 * d]
        c = theta[..., 2 * d]
        return W, U, c

    def join(self, *blocks):
        """Inverse of :meth:`split`."""
        if self.kind == DIFFERENCE:
            A, a, B, b = (np.asarray(x, dtype=float) for x in blocks)
            lead = a.shape[:-1]
            return np.concatenate([A.reshape(lead + (-1,)), a, B.reshape(lead + (-1,)), b], axis=-1)
        W, U, c = (np.asarray(x, dtype=float) for x in blocks)
        return np.concatenate([W, U, c[..., None]], axis=-1)

    def _check(self, z, theta):
        z = np.asarray(z, dtype=float)
        theta = np.asarray(theta, dtype=float)
        if z.shape[-1:] != (self.d,):
            raise ContractViolation(f"state has trailing dimension {z.shape[-1:]} but family expects d={self.d}")
        if theta.shape[-1:] != (self.k,):
            raise ContractViolation(f"parameter has trailing dimension {theta.shape[-1:]} but family expects k={self.k}")
        return z, theta

    def _preacts(self, z, theta):
        if self.kind == DIFFERENCE:
            A, a, B, b = self.split(theta)
            u = np.einsum("...ij,...j->...i", A, z) + a
            v = np.einsum("...ij,...j->...i", B, z) + b
            return u, v
        W, U, c = self.split(theta)
        return np.einsum("...j,...j->...", W, z) + c, None

    # -- evaluation -----------------------------------------------------

    def f(self, z, theta):
        z, theta = self._check(z, theta)
        u, v = self._preacts(z, theta)
        if self.kind == DIFFERENCE:
            return softplus(u, self.tau) - softplus(v, self.tau)
        U = self.split(theta)[1]
        return U * softplus(u, self.tau)[..., None]

    def jac_z(self, z, theta):
        """``df/dz`` with shape ``(..., d, d)``."""
        z, theta = self._check(z, theta)
        u, v = self._preacts(z, theta)
        if self.kind == DIFFERENCE:
            A, _, B, _ = self.split(theta)
            su = softplus_prime(u, self.tau)
            sv = softplus_prime(v, self.tau)
            return su[..., :, None] * A - sv[..., :, None] * B
        W, U, _ = self.split(theta)
        su = softplus_prime(u, self.tau)
        return (U * su[..., None])[..., :, None] * W[..., None, :]

    def jac_theta(self, z, theta):
        """``df/dtheta`` with shape ``(..., d, k)`` in the parameter layout order."""
        z, theta = self._check(z, theta)
        d = self.d
        u, v = self._preacts(z, theta)
        lead = np.broadcast_shapes(z.shape[:-1], theta.shape[:-1])
        eye = np.eye(d)
        if self.kind == DIFFERENCE:
            su = softplus_prime(u, self.tau)
            sv = softplus_prime(v, self.tau)
            zb = np.broadcast_to(z, lead + (d,))
            # d f_i / d A[a, b] = su_i * delta_ia * z_b
            dA = su[..., :, None, None] * eye[:, :, None] * zb[..., None, None, :]
            dB = -sv[..., :, None, None] * eye[:, :, None] * zb[..., None, None, :]
            da = su[..., :, None] * eye
            db = -sv[..., :, None] * eye
            return np.concatenate(
                [dA.reshape(lead + (d, d * d)), da, dB.reshape(lead + (d, d * d)), db], axis=-1
            )
        W, U, _ = self.split(theta)
        su = softplus_prime(u, self.tau)[..., None]
        s = softplus(u, self.tau)[..., None]
        zb = np.broadcast_to(z, lead + (d,))
        dW = (U * su)[..., :, None] * zb[..., None, :]
        dU = s[..., None] * np.broadcast_to(eye, lead + (d, d))
        dc = (U * su)[..., :, None]
        return np.concatenate([dW, dU, dc], axis=-1)

    # -- vector-Jacobian products (the hot path of every adjoint sweep) --

    def vjp_z(self, z, theta, p):
        """``p^T df/dz`` with shape ``(..., d)``."""
        z, theta = self._check(z, theta)
        u, v = self._preacts(z, theta)
        if self.kind == DIFFERENCE:
            A, _, B, _ = self.split(theta)
            wu = softplus_prime(u, self.tau) * p
            wv = softplus_prime(v, self.tau) * p
            return np.einsum("...i,...ij->...j", wu, A) - np.einsum("...i,...ij->...j", wv, B)
        W, U, _ = self.split(theta)
        coef = np.sum(p * U, axis=-1) * softplus_prime(u, self.tau)
        return coef[..., None] * W

    def vjp_theta(self, z, theta, p):
        """``p^T df/dtheta`` with shape ``(..., k)``."""
        z, theta = self._check(z, theta)
        u, v = self._preacts(z, theta)
        if self.kind == DIFFERENCE:
            wu = softplus_prime(u, self.tau) * p
            wv = softplus_prime(v, self.tau) * p
            lead = wu.shape[:-1]
            zb = np.broadcast_to(z, lead + (self.d,))
            gA = (wu[..., :, None] * zb[..., None, :]).reshape(lead + (-1,))
            gB = (wv[..., :, None] * zb[..., None, :]).reshape(lead + (-1,))
            return np.concatenate([gA, wu, -gB, -wv], axis=-1)
        W, U, _ = self.split(theta)
        coef = np.sum(p * U, axis=-1) * softplus_prime(u, self.tau)
        lead = coef.shape
        zb = np.broadcast_to(z, lead + (self.d,))
        s = softplus(u, self.tau)
        return np.concatenate([coef[..., None] * zb, p * s[..., None], coef[..., None]], axis=-1)


    def width_operator(self, thetas):
        """Width-averaged map ``z -> (1/M) sum_m f(z, theta_m)`` for ``thetas`` of shape ``(M, k)``."""
        return self.width_operators(np.asarray(thetas, dtype=float)[None])[0]

    def _stacked(self, params):
        """Hidden-unit form ``(W, b, S)`` of a parameter stack ``(T, M, k)``.

        ``W`` is ``(T, H, d)``, ``b`` is ``(T, H)`` and ``S`` is ``(T, H, d)``
        with ``H = 2 M d`` (difference) or ``H = M`` (conventional).
        """
        params = np.asarray(params, dtype=float)
        if params.ndim != 3 or params.shape[2] != self.k:
            raise ContractViolation(f"expected parameters of shape (T, M, {self.k}), got {params.shape}")
        T, M, d = params.shape[0], params.shape[1], self.d
        if self.kind == DIFFERENCE:
            A, a, B, b = self.split(params)
            W = np.stack([A, B], axis=2).reshape(T, 2 * M * d, d)
            bias = np.stack([a, b], axis=2).reshape(T, 2 * M * d)
            route = np.tile(np.concatenate([np.eye(d), -np.eye(d)], axis=0) / M, (M, 1))
            S = np.broadcast_to(route, (T,) + route.shape)
        else:
            W, U, bias = self.split(params)
            S = U / M
        return W, bias, S

    def width_operators(self, params):
        """One :class:`WidthOperator` per leading index of ``params`` (shape ``(T, M, k)``)."""
        W, bias, S = self._stacked(params)
        return [WidthOperator(W[i], bias[i], S[i], self.tau) for i in range(W.shape[0])]

    def param_grad(self, params, Z, p):
        """Sample mean of ``p^T df/dtheta`` for every particle of every slice.

        ``params`` is ``(T, M, k)``; ``Z`` and ``p`` are ``(T, n, d)``.  Returns
        ``(T, M, k)``, equal to ``vjp_theta(Z[:, :, None], params[:, None], p[:, :, None]).mean(axis=1)``
        but computed with batched matrix products.
        """
        params = np.asarray(params, dtype=float)
        W, bias, S = self._stacked(params)
        T, M, d = params.shape[0], params.shape[1], self.d
        n = Z.shape[1]
        pre = np.matmul(Z, np.swapaxes(W, 1, 2)) + bias[:, None, :]
        x = pre / self.tau
        back = np.matmul(p, np.swapaxes(S, 1, 2)) * M  # (T, n, H)
        delta = expit(x) * back
        gW = np.matmul(np.swapaxes(delta, 1, 2), Z) / n  # (T, H, d)
        gb = delta.mean(axis=1)  # (T, H)
        if self.kind == DIFFERENCE:
            # hidden units are ordered (m, branch, i); branch 1 already carries the minus sign
            gW = gW.reshape(T, M, 2, d * d)
            gb = gb.reshape(T, M, 2, d)
            return np.concatenate([gW[:, :, 0], gb[:, :, 0], gW[:, :, 1], gb[:, :, 1]], axis=-1)
        act = self.tau * np.logaddexp(0.0, x)  # (T, n, M)
        gU = np.matmul(np.swapaxes(act, 1, 2), p) / n  # (T, M, d)
        return np.concatenate([gW, gU, gb[..., None]], axis=-1)


class WidthOperator:
    """Width average written as ``(1/M) sum_m f(z, theta_m) = sigma(z W^T + b) S``.

    ``W`` stacks every inner weight row, ``b`` the matching offsets and ``S``
    routes each hidden unit to its output coordinate with weight ``+-1/M``
    (difference family) or ``U_m / M`` (conventional family).  Evaluating the
    width average is then two matrix products, which is where the flows spend
    nearly all their time.
    """

    __slots__ = ("W", "WT", "b", "S", "ST", "tau")

    def __init__(self, W, b, S, tau=1.0):
        self.W = W
        self.WT = np.ascontiguousarray(W.T)
        self.b = b
        self.S = S
        self.ST = np.ascontiguousarray(S.T)
        self.tau = tau

    def preact(self, z):
        return z @ self.WT + self.b

    def __call__(self, z):
        return self.from_preact(self.preact(z))

    def from_preact(self, pre):
        if self.tau == 1.0:
            return np.logaddexp(0.0, pre) @ self.S
        return (self.tau * np.logaddexp(0.0, pre / self.tau)) @ self.S

    def vjp_z(self, z, p, pre=None):
        """``(1/M) sum_m p^T d_z f(z, theta_m)`` for batches ``z, p`` of shape ``(n, d)``."""
        if pre is None:
            pre = self.preact(z)
        gate = expit(pre) if self.tau == 1.0 else expit(pre / self.tau)
        return (gate * (p @ self.ST)) @ self.W


DEFAULT_FAMILY = ActivationFamily()


def eval_f(family: ActivationFamily, z, theta):
    return family.f(z, theta)


def jac_z(family: ActivationFamily, z, theta):
    return family.jac_z(z, theta)


def jac_theta(family: ActivationFamily, z, theta):
    return family.jac_theta(z, theta)
