"""Pseudo-time integration of the regularized gradient flows.

Finite network::

    dTheta/ds = -M L grad E(Theta) - 2 e^{-s} Theta

Continuous-depth particles, node by node::

    dtheta_m(s; t_j)/ds = -G_m(t_j)

where ``G`` is :func:`resnet_lab.continuum.loss_and_functional_grad` (it
already contains the ``2 e^{-s} theta`` term).  Along either flow the
regularized cost ``E_s = E + e^{-s} * second_moment`` should not increase.
"""

from __future__ import annotations

import csv
import hashlib
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import continuum, discrete
from .errors import ContractViolation, NumericOverflow, ParseError

log = logging.getLogger(__name__)

TRACE_COLUMNS = ("s", "E", "E_s", "second_moment", "grad_norm", "wall_ms")
INTEGRATORS = ("euler", "rk4")


@dataclass(frozen=True)
class FlowConfig:
    h_s: float = 1e-3
    steps: int = 1000
    integrator: str = "euler"
    snapshot_every: int = 1
    seed: int = 0
    audit_slack: float = 1e-10
    s0: float = 0.0
    keep_states: bool = False

    def __post_init__(self):
        if not self.h_s > 0:
            raise ContractViolation(f"h_s must be positive, got {self.h_s}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ContractViolation(f"steps must be a positive integer, got {self.steps}")
        if self.integrator.lower() not in INTEGRATORS:
            raise ContractViolation(f"integrator must be one of {INTEGRATORS}, got {self.integrator!r}")
        if self.snapshot_every < 1:
            raise ContractViolation("snapshot_every must be >= 1")
        if self.s0 < 0:
            raise ContractViolation("initial pseudo-time must be nonnegative")


@dataclass
class FlowTrace:
    s: list = field(default_factory=list)
    E: list = field(default_factory=list)
    E_s: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    wall_ms: list = field(default_factory=list)
    violations: list = field(default_factory=list)
    states: list = field(default_factory=list)

    def append(self, s, E, E_s, second_moment, grad_norm, wall_ms):
        if self.s and not s > self.s[-1]:
            raise ContractViolation("trace pseudo-times must be strictly increasing")
        for name, v in zip(TRACE_COLUMNS, (s, E, E_s, second_moment, grad_norm, wall_ms)):
            getattr(self, name).append(float(v))

    def __len__(self):
        return len(self.s)

    def column(self, name):
        return np.asarray(getattr(self, name), dtype=float)

    def rows(self):
        return list(zip(*(getattr(self, c) for c in TRACE_COLUMNS)))

    def checksum(self):
        """SHA-256 over every column except wall-clock time."""
        h = hashlib.sha256()
        for name in TRACE_COLUMNS[:-1]:
            h.update(self.column(name).tobytes())
        return h.hexdigest()

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for row in self.rows():
                w.writerow([repr(v) for v in row])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows or tuple(rows[0]) != TRACE_COLUMNS:
            raise ParseError(f"trace header must be {','.join(TRACE_COLUMNS)}", row=0)
        trace = cls()
        for i, row in enumerate(rows[1:], start=1):
            if len(row) != len(TRACE_COLUMNS):
                raise ParseError(f"row {i}: expected {len(TRACE_COLUMNS)} columns, got {len(row)}", row=i)
            try:
                trace.append(*(float(v) for v in row))
            except ValueError as exc:
                raise ParseError(f"row {i}: {exc}", row=i) from None
        return trace


@dataclass
class AuditReport:
    violations: list
    slack: float
    n_pairs: int

    @property
    def passed(self):
        return not self.violations


def energy_audit(trace: FlowTrace, slack=1e-10):
    """Every consecutive pair with ``E_s[k+1] > E_s[k] + slack``."""
    Es = trace.column("E_s")
    s = trace.column("s")
    bad = []
    for k in range(len(Es) - 1):
        if Es[k + 1] > Es[k] + slack:
            bad.append((k, float(s[k]), float(s[k + 1]), float(Es[k + 1] - Es[k])))
    return AuditReport(bad, slack, max(len(Es) - 1, 0))


def regularizer_identity_error(trace: FlowTrace):
    """Largest ``|E_s - E - e^{-s} second_moment|`` relative to ``|E_s|`` over all rows."""
    s, E, Es, sm = (trace.column(c) for c in ("s", "E", "E_s", "second_moment"))
    resid = np.abs(Es - E - np.exp(-s) * sm)
    scale = np.maximum(np.abs(Es), np.finfo(float).tiny)
    return float(np.max(resid / scale)) if len(s) else 0.0


def _integrate(theta0, evaluate, moment, cfg: FlowConfig, wrap):
    """Shared explicit integrator. ``evaluate(theta, s) -> (E, force)`` with force the data term."""
    integrator = cfg.integrator.lower()
    h = cfg.h_s
    theta = np.array(theta0, dtype=float)
    trace = FlowTrace()
    start = time.perf_counter()

    def rhs(th, s):
        E, force = evaluate(th, s)
        return E, -force - 2.0 * np.exp(-s) * th

    for k in range(cfg.steps + 1):
        s = cfg.s0 + k * h
        E, v1 = rhs(theta, s)
        if k % cfg.snapshot_every == 0 or k == cfg.steps:
            sm = moment(theta)
            trace.append(s, E, E + np.exp(-s) * sm, sm, np.linalg.norm(v1),
                         1e3 * (time.perf_counter() - start))
            if cfg.keep_states:
                trace.states.append(wrap(theta.copy()))
        if k == cfg.steps:
            break
        if integrator == "euler":
            theta = theta + h * v1
        else:
            _, v2 = rhs(theta + 0.5 * h * v1, s + 0.5 * h)
            _, v3 = rhs(theta + 0.5 * h * v2, s + 0.5 * h)
            _, v4 = rhs(theta + h * v3, s + h)
            theta = theta + (h / 6.0) * (v1 + 2.0 * v2 + 2.0 * v3 + v4)
        if not np.all(np.isfinite(theta)):
            raise NumericOverflow(f"non-finite parameters after flow step {k + 1}", where=k + 1)

    audit = energy_audit(trace, cfg.audit_slack)
    trace.violations = audit.violations
    if audit.violations:
        log.warning("E_s increased beyond slack %.3g at %d of %d snapshots",
                    cfg.audit_slack, len(audit.violations), audit.n_pairs)
    return wrap(theta), trace


def flow_discrete(grid: discrete.ParamGrid, family, g, data, cfg: FlowConfig):
    """Integrate the finite-network flow; returns ``(final grid, trace)``."""
    L, M = grid.L, grid.M

    def evaluate(theta, s):
        E, gradient = discrete.loss_and_grad(discrete.ParamGrid(theta), family, g, data)
        return E, (M * L) * gradient

    def moment(theta):
        return float(np.sum(theta ** 2)) / (L * M)

    return _integrate(grid.theta, evaluate, moment, cfg, discrete.ParamGrid)


def flow_continuum(ens: continuum.ParamPathEnsemble, family, g, data, grid=None, cfg: FlowConfig = None):
    """Integrate the particle flow on the ensemble's depth nodes; returns ``(final ensemble, trace)``."""
    if cfg is None:
        raise ContractViolation("a FlowConfig is required")
    if grid is not None and grid.n_intervals != ens.n_intervals:
        raise ContractViolation(
            f"the flow updates node values, so the depth grid ({grid.n_intervals} intervals) "
            f"must match the ensemble ({ens.n_intervals} intervals)"
        )
    weights = ens.grid.trapezoid_weights()
    M = ens.M

    def evaluate(theta, s):
        # s = inf drops the regularizer from G; _integrate adds it back
        return continuum.loss_and_functional_grad(continuum.ParamPathEnsemble(theta), family, g, data)

    def moment(theta):
        return float(weights @ np.sum(theta ** 2, axis=(1, 2))) / M

    return _integrate(ens.values, evaluate, moment, cfg, continuum.ParamPathEnsemble)
