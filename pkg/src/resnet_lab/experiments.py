"""Desk-scale verification harness: depth and width convergence sweeps,
long-horizon training, perturbation stability and gradient oracles.

Every experiment is a pure function of its config dataclass.  Randomness
comes from ``numpy.random.default_rng`` seeded by config fields only, so a
manifest is enough to replay a run bit for bit.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy import stats
from scipy.spatial.distance import pdist

from . import continuum, discrete, formats
from .activation import ActivationFamily
from .dataset import MeasuringFunction, generate
from .errors import ContractViolation
from .flow import FlowConfig, FlowTrace, flow_continuum, flow_discrete, regularizer_identity_error

log = logging.getLogger(__name__)

THREADS_ENV = "RESNET_LAB_THREADS"


# ---------------------------------------------------------------- configs

def _from_dict(cls, data, where):
    data = dict(data or {})
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ContractViolation(f"unknown key {where}.{unknown[0]}" if where else f"unknown key {unknown[0]}")
    if "task" in names and isinstance(data.get("task"), dict):
        data["task"] = TaskConfig.from_dict(data["task"], f"{where}.task" if where else "task")
    for name in ("Ls", "Ms", "deltas", "g_w"):
        if name in data and data[name] is not None:
            data[name] = tuple(data[name])
    return cls(**data)


@dataclass(frozen=True)
class TaskConfig:
    """The supervised problem shared by every experiment.

    The default is a teacher-labelled interpolation task: four points in the
    radius-2 disc labelled by a fixed random L=4, M=4 network with weights of
    scale 3, read out through ``g(z) = z_0 + z_1``.
    """

    d: int = 2
    n: int = 4
    radius: float = 2.0
    label_rule: str = "teacher-net"
    data_seed: int = 0
    teacher_seed: int = 7
    teacher_scale: float = 3.0
    teacher_L: int = 4
    teacher_M: int = 4
    g_w: tuple = None
    g_c: float = 0.0
    kind: str = "difference"
    tau: float = 1.0
    constant: float = 0.0
    path: str = None

    def family(self):
        return ActivationFamily(kind=self.kind, d=self.d, tau=self.tau)

    def measuring(self):
        w = np.ones(self.d) if self.g_w is None else np.asarray(self.g_w, dtype=float)
        if w.size != self.d:
            raise ContractViolation(f"g_w has {w.size} entries but d={self.d}")
        return MeasuringFunction(w, self.g_c)

    def teacher(self):
        rng = np.random.default_rng(self.teacher_seed)
        k = self.family().k
        return discrete.ParamGrid(rng.normal(scale=self.teacher_scale, size=(self.teacher_L, self.teacher_M, k)))

    def build(self):
        """``(family, g, dataset)``; a ``path`` loads the data from CSV instead."""
        family, g = self.family(), self.measuring()
        if self.path is not None:
            from .dataset import load_csv

            data = load_csv(self.path)
            if data.d != self.d:
                raise ContractViolation(f"dataset {self.path} has d={data.d} but the task says d={self.d}")
        else:
            teacher = self.teacher() if self.label_rule == "teacher-net" else None
            data = generate(self.data_seed, self.n, self.d, self.radius, self.label_rule,
                            g=g, family=family, teacher=teacher, constant=self.constant)
        return family, g, data

    @classmethod
    def from_dict(cls, data, where="task"):
        return _from_dict(cls, data, where)

    def to_dict(self):
        out = asdict(self)
        if out["g_w"] is not None:
            out["g_w"] = list(out["g_w"])
        return out


def initial_particles(rng, M, k, scale=2.0, truncate=3.0):
    """``M`` i.i.d. draws from a centered Gaussian clipped to a box.

    Each coordinate is normal with standard deviation ``scale`` conditioned on
    ``|theta_i| <= truncate * scale``; draws outside the box are resampled.
    """
    if M < 1:
        raise ContractViolation(f"need at least one particle, got M={M}")
    out = rng.normal(scale=scale, size=(M, k))
    if truncate is None or not np.isfinite(truncate):
        return out
    bound = truncate * scale
    bad = np.abs(out) > bound
    while bad.any():
        out[bad] = rng.normal(scale=scale, size=int(bad.sum()))
        bad = np.abs(out) > bound
    return out


@dataclass(frozen=True)
class DepthSweepConfig:
    task: TaskConfig = field(default_factory=TaskConfig)
    Ls: tuple = (8, 16, 32, 64, 128)
    M: int = 4
    S: float = 1.0
    h_s: float = 1e-2
    init_seed: int = 1
    init_scale: float = 2.0
    truncate: float = 3.0
    ref_factor: int = 8
    zero_init: bool = False

    @classmethod
    def from_dict(cls, data, where=""):
        return _from_dict(cls, data, where)


@dataclass(frozen=True)
class WidthSweepConfig:
    task: TaskConfig = field(default_factory=TaskConfig)
    Ms: tuple = (8, 32, 128, 512)
    n_seeds: int = 20
    N_t: int = 8
    S: float = 1.0
    h_s: float = 0.02
    seed: int = 0
    init_scale: float = 2.0
    truncate: float = 3.0
    M_ref: int = None
    shared_draw: bool = False

    @classmethod
    def from_dict(cls, data, where=""):
        return _from_dict(cls, data, where)


@dataclass(frozen=True)
class ZeroLossConfig:
    task: TaskConfig = field(default_factory=TaskConfig)
    M: int = 32
    N_t: int = 32
    h_s: float = 1e-3
    steps: int = 20000
    threshold: float = 1e-2
    init_seed: int = 1
    init_scale: float = 2.0
    truncate: float = 3.0
    snapshot_every: int = 1
    burn_in: int = 100
    audit_slack: float = 1e-10

    @classmethod
    def from_dict(cls, data, where=""):
        return _from_dict(cls, data, where)


@dataclass(frozen=True)
class StabilityConfig:
    task: TaskConfig = field(default_factory=TaskConfig)
    M: int = 8
    N_t: int = 32
    deltas: tuple = (1e-3, 1e-2, 1e-1)
    seed: int = 0
    init_scale: float = 1.0
    truncate: float = 3.0
    tol: float = 0.2

    @classmethod
    def from_dict(cls, data, where=""):
        return _from_dict(cls, data, where)


@dataclass(frozen=True)
class GradcheckConfig:
    seed: int = 0
    n_discrete: int = 20
    n_continuum: int = 10
    h: float = 1e-5
    eps: float = 1e-5
    N_t: int = 128
    tol_discrete: float = 1e-5
    tol_continuum: float = 1e-4
    hat_min: int = 16
    hat_max: int = 32
    n_probes: int = 4

    @classmethod
    def from_dict(cls, data, where=""):
        return _from_dict(cls, data, where)


# ---------------------------------------------------------------- parallelism

def worker_count():
    """Worker cap from ``RESNET_LAB_THREADS`` (default: CPU count)."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ContractViolation(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return max(n, 1)


def parallel_map(fn, jobs):
    """Ordered map over independent jobs; processes only when more than one worker is allowed."""
    jobs = list(jobs)
    workers = min(worker_count(), len(jobs))
    if workers <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


# ---------------------------------------------------------------- fits

@dataclass
class SweepResult:
    axis: str
    points: list
    fitted_slope: float
    slope_ci: tuple
    r2: float
    flags: list = field(default_factory=list)
    summary: list = field(default_factory=list)
    reference: float = None
    identity_error: float = 0.0

    def to_dict(self):
        return asdict(self)


def loglog_fit(x, y, level=0.95):
    """OLS of ``log y`` on ``log x``: ``(slope, (lo, hi), r2)``."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.size < 3:
        raise ContractViolation(f"a slope fit needs at least 3 points, got {x.size}")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ContractViolation("log-log fit needs strictly positive values")
    fit = stats.linregress(np.log(x), np.log(y))
    half = stats.t.ppf(0.5 + level / 2, x.size - 2) * fit.stderr
    return float(fit.slope), (float(fit.slope - half), float(fit.slope + half)), float(fit.rvalue ** 2)


def _safe_fit(x, y):
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    keep = y > 0
    if keep.sum() < 3:
        return float("nan"), (float("nan"), float("nan")), float("nan"), ["degenerate: fewer than 3 positive values"]
    slope, ci, r2 = loglog_fit(x[keep], y[keep])
    return slope, ci, r2, [] if keep.all() else ["zero values dropped from fit"]


# ---------------------------------------------------------------- depth

def _flow_cfg(S, h_s):
    steps = int(round(S / h_s))
    if steps < 1 or abs(steps * h_s - S) > 1e-9 * max(S, 1.0):
        raise ContractViolation(f"S={S} is not a whole number of steps of h_s={h_s}")
    return FlowConfig(h_s=h_s, steps=steps, snapshot_every=steps)


def _depth_job(job):
    L, particles, family, g, data, cfg = job
    grid = discrete.ParamGrid(np.repeat(particles[None], L, axis=0))
    _, trace = flow_discrete(grid, family, g, data, cfg)
    return trace.E[-1], trace


def depth_sweep(config: DepthSweepConfig, with_traces=False):
    """Finite-depth flows against one fine continuum reference started from the same particles."""
    Ls = sorted(int(L) for L in config.Ls)
    if len(Ls) < 3:
        raise ContractViolation(f"depth_sweep needs at least 3 L values, got {len(Ls)}")
    if len(set(Ls)) != len(Ls) or Ls[0] < 1:
        raise ContractViolation("L values must be distinct positive integers")
    family, g, data = config.task.build()
    if config.zero_init:
        particles = np.zeros((config.M, family.k))
    else:
        rng = np.random.default_rng(config.init_seed)
        particles = initial_particles(rng, config.M, family.k, config.init_scale, config.truncate)
    cfg = _flow_cfg(config.S, config.h_s)

    N_ref = config.ref_factor * Ls[-1]
    ref_ens = continuum.ParamPathEnsemble.constant(particles, N_ref)
    _, ref_trace = flow_continuum(ref_ens, family, g, data, None, cfg)
    E_ref = ref_trace.E[-1]

    results = parallel_map(_depth_job, [(L, particles, family, g, data, cfg) for L in Ls])
    errors = [abs(E - E_ref) for E, _ in results]
    points = [(L, err, config.init_seed) for L, err in zip(Ls, errors)]
    slope, ci, r2, flags = _safe_fit(Ls, errors)
    summary = [{"L": L, "E": E, "E_ref": E_ref, "error": err} for L, (E, _), err in zip(Ls, results, errors)]
    identity = max(regularizer_identity_error(t) for t in [ref_trace] + [t for _, t in results])
    out = SweepResult("depth_L", points, slope, ci, r2, flags, summary, E_ref, identity)
    if with_traces:
        out.traces = [ref_trace] + [t for _, t in results]
    return out


# ---------------------------------------------------------------- width

def _width_job(job):
    M, seed, config, family, g, data = job
    if config.shared_draw:
        rng = np.random.default_rng([config.seed, M])
    else:
        rng = np.random.default_rng([config.seed, seed, M])
    particles = initial_particles(rng, M, family.k, config.init_scale, config.truncate)
    ens = continuum.ParamPathEnsemble.constant(particles, config.N_t)
    _, trace = flow_continuum(ens, family, g, data, None, _flow_cfg(config.S, config.h_s))
    return trace.E[-1], regularizer_identity_error(trace)


def width_sweep(config: WidthSweepConfig):
    """Across-seed spread of the trained cost as the particle count grows."""
    if config.n_seeds < 5:
        raise ContractViolation(f"width_sweep needs n_seeds >= 5 for a stable spread, got {config.n_seeds}")
    Ms = sorted(int(M) for M in config.Ms)
    if len(Ms) < 3:
        raise ContractViolation(f"width_sweep needs at least 3 M values, got {len(Ms)}")
    family, g, data = config.task.build()
    M_ref = config.M_ref if config.M_ref is not None else Ms[-1]
    axis = sorted(set(Ms) | {M_ref})
    jobs = [(M, seed, config, family, g, data) for M in axis for seed in range(config.n_seeds)]
    values = parallel_map(_width_job, jobs)

    per_M = {}
    points = []
    for (M, seed, *_), (E, _) in zip(jobs, values):
        per_M.setdefault(M, []).append(E)
        if M in Ms:
            points.append((M, E, seed))
    ref_mean = float(np.mean(per_M[M_ref]))
    summary = []
    for M in Ms:
        Es = np.asarray(per_M[M])
        summary.append({
            "M": M,
            "mean": float(Es.mean()),
            "std": float(Es.std(ddof=1)),
            "bias": abs(float(Es.mean()) - ref_mean),
            "q05": float(np.quantile(Es, 0.05)),
            "q95": float(np.quantile(Es, 0.95)),
        })
    flags = []
    if M_ref in Ms:
        flags.append(f"M_ref={M_ref} is part of the sweep; its bias point is a self-comparison")
    slope, ci, r2, fit_flags = _safe_fit(Ms, [row["std"] for row in summary])
    identity = max(err for _, err in values)
    return SweepResult("width_M", points, slope, ci, r2, flags + fit_flags, summary, ref_mean, identity)


# ---------------------------------------------------------------- long run

@dataclass
class ZeroLossResult:
    trace: FlowTrace
    ensemble: continuum.ParamPathEnsemble
    final_E: float
    threshold: float
    verdict: bool
    monotone_after_burn_in: bool
    audit_violations: list
    support_spread: np.ndarray  # (N_t + 1, 2): min and median pairwise particle distance
    identity_error: float

    @property
    def passed(self):
        return self.verdict


def support_spread(ens: continuum.ParamPathEnsemble):
    """Heuristic spread of the particle cloud at each node: min and median pairwise distance."""
    if ens.M < 2:
        return np.zeros((ens.n_intervals + 1, 2))
    rows = []
    for cloud in ens.values:
        dist = pdist(cloud)
        rows.append((dist.min(), np.median(dist)))
    return np.asarray(rows)


def zero_loss_run(config: ZeroLossConfig, ensemble: continuum.ParamPathEnsemble = None):
    """Long continuum flow on an interpolation task; verdict is ``final E < threshold``."""
    family, g, data = config.task.build()
    if ensemble is None:
        rng = np.random.default_rng(config.init_seed)
        particles = initial_particles(rng, config.M, family.k, config.init_scale, config.truncate)
        ensemble = continuum.ParamPathEnsemble.constant(particles, config.N_t)
    cfg = FlowConfig(h_s=config.h_s, steps=config.steps, snapshot_every=config.snapshot_every,
                     audit_slack=config.audit_slack)
    final, trace = flow_continuum(ensemble, family, g, data, None, cfg)
    E = trace.column("E")
    s = trace.column("s")
    after = E[s >= config.burn_in * config.h_s - 1e-12]
    final_E = float(E[-1])
    return ZeroLossResult(
        trace=trace,
        ensemble=final,
        final_E=final_E,
        threshold=config.threshold,
        verdict=final_E < config.threshold,
        monotone_after_burn_in=bool(np.all(np.diff(after) <= 0)),
        audit_violations=list(trace.violations),
        support_spread=support_spread(final),
        identity_error=regularizer_identity_error(trace),
    )


# ---------------------------------------------------------------- stability

@dataclass
class StabilityReport:
    deltas: list
    ratio_Z: list
    ratio_p: list
    passed: bool
    notes: list = field(default_factory=list)


def stability_probe(config: StabilityConfig, ensemble=None, directions=None):
    """Response of ``Z(1)`` and ``p`` to moving every particle by ``delta`` along a unit direction.

    ``directions`` (``(M, k)`` or ``(N_t+1, M, k)``) overrides the random
    directions; each particle's offset is normalized to unit length per node.
    """
    family, g, data = config.task.build()
    rng = np.random.default_rng(config.seed)
    if ensemble is None:
        particles = initial_particles(rng, config.M, family.k, config.init_scale, config.truncate)
        ensemble = continuum.ParamPathEnsemble.constant(particles, config.N_t)
    if directions is None:
        directions = rng.normal(size=(ensemble.M, family.k))
    u = np.broadcast_to(np.asarray(directions, dtype=float), ensemble.values.shape).copy()
    norms = np.linalg.norm(u, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise ContractViolation("perturbation directions must be nonzero")
    u /= norms

    base = continuum.trajectories(ensemble, family, g, data)
    deltas, rZ, rp, notes = [], [], [], []
    for delta in config.deltas:
        if delta == 0:
            notes.append("delta=0 skipped: ratio undefined")
            continue
        moved = continuum.ParamPathEnsemble(ensemble.values + delta * u)
        pert = continuum.trajectories(moved, family, g, data)
        deltas.append(float(delta))
        rZ.append(float(np.linalg.norm(pert.Z[-1] - base.Z[-1], axis=-1).max() / delta))
        rp.append(float(np.linalg.norm(pert.p - base.p, axis=-1).max() / delta))

    order = np.argsort(deltas)
    passed = bool(np.all(np.isfinite(rZ)) and np.all(np.isfinite(rp)))
    for ratios in (np.asarray(rZ)[order], np.asarray(rp)[order]):
        for small, big in zip(ratios[:-1], ratios[1:]):
            if small > (1 + config.tol) * big:
                passed = False
        if len(ratios) >= 2 and ratios[1] > 0 and abs(ratios[0] / ratios[1] - 1) > config.tol:
            passed = False
            notes.append("smallest two deltas disagree beyond tolerance")
    return StabilityReport(deltas, rZ, rp, passed, notes)


# ---------------------------------------------------------------- gradient oracles

@dataclass
class GradcheckReport:
    discrete_errors: list
    continuum_errors: list
    tol_discrete: float
    tol_continuum: float

    @property
    def max_discrete(self):
        return max(self.discrete_errors, default=0.0)

    @property
    def max_continuum(self):
        return max(self.continuum_errors, default=0.0)

    @property
    def passed(self):
        return self.max_discrete < self.tol_discrete and self.max_continuum < self.tol_continuum


def relative_error(a, b):
    """``max|a - b| / max|b|`` (normwise); 0 when both vanish."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = np.abs(b).max()
    diff = np.abs(a - b).max()
    if scale == 0:
        return 0.0 if diff == 0 else float("inf")
    return float(diff / scale)


def _random_problem(rng, d, n, kind=None):
    kind = kind or ("difference" if rng.random() < 0.5 else "conventional")
    family = ActivationFamily(kind=kind, d=d, tau=float(rng.uniform(0.5, 2.0)))
    g = MeasuringFunction(rng.normal(size=d), float(rng.normal()))
    data = generate(int(rng.integers(2 ** 31)), n, d, 1.0, "trig")
    return family, g, data


def fd_grad_discrete(grid, family, g, data, h=1e-5):
    """Central differences of the cost over every entry of the grid."""
    theta = grid.theta
    out = np.empty_like(theta)
    for idx in np.ndindex(theta.shape):
        plus, minus = theta.copy(), theta.copy()
        plus[idx] += h
        minus[idx] -= h
        out[idx] = (discrete.loss(discrete.ParamGrid(plus), family, g, data)
                    - discrete.loss(discrete.ParamGrid(minus), family, g, data)) / (2 * h)
    return out


def discrete_gradcheck_case(rng, h=1e-5):
    d = int(rng.integers(1, 4))
    L, M, n = int(rng.integers(1, 6)), int(rng.integers(1, 5)), int(rng.integers(1, 7))
    family, g, data = _random_problem(rng, d, n)
    grid = discrete.ParamGrid(rng.normal(size=(L, M, family.k)))
    return relative_error(discrete.grad(grid, family, g, data), fd_grad_discrete(grid, family, g, data, h))


def hat(n_intervals, center, half):
    """Piecewise-linear tent on the depth nodes, peak 1 at ``center``."""
    return np.clip(1.0 - np.abs(np.arange(n_intervals + 1) - center) / half, 0.0, None)


def functional_probe(ens, family, g, data, s, m, bump, direction, eps=1e-5):
    """``(predicted, finite-difference)`` directional derivative of ``E_s`` along one particle's path.

    The prediction integrates the force table against the bump, divided by
    ``M``.  The data part uses Simpson's rule with midpoint forces, since the
    force is not linear between nodes.  The regularizer part uses the
    trapezoid rule, matching how the second moment itself is discretised.
    """
    grid = ens.grid
    G = continuum.functional_grad(ens, family, g, data)
    Gm = continuum.midpoint_data_force(ens, family, g, data)
    qn = G[:, m] @ direction * bump
    qm = Gm[:, m] @ direction * 0.5 * (bump[:-1] + bump[1:])
    pred = grid.h / 6.0 * np.sum(qn[:-1] + 4.0 * qm + qn[1:])
    if np.isfinite(s):
        pred += grid.trapezoid_weights() @ (2.0 * np.exp(-s) * ens.values[:, m] @ direction * bump)
    pred /= ens.M
    nu = bump[:, None] * direction
    plus, minus = ens.copy(), ens.copy()
    plus.values[:, m] += eps * nu
    minus.values[:, m] -= eps * nu
    fd = (continuum.loss_regularized_continuum(plus, family, g, data, s)
          - continuum.loss_regularized_continuum(minus, family, g, data, s)) / (2 * eps)
    return float(pred), float(fd)


def continuum_gradcheck_case(rng, N_t=128, eps=1e-5, hat_min=16, hat_max=32, n_probes=4):
    """Normwise error over several tent probes (random particle, centre, width and direction)."""
    d, M, n = int(rng.integers(1, 3)), int(rng.integers(1, 5)), int(rng.integers(1, 7))
    family, g, data = _random_problem(rng, d, n)
    t = np.linspace(0.0, 1.0, N_t + 1)[:, None, None]
    base = rng.normal(size=(M, family.k))
    amp = rng.normal(size=(M, family.k))
    freq = rng.uniform(0.5, 3.0)
    ens = continuum.ParamPathEnsemble(base[None] + amp[None] * np.sin(freq * t))
    s = float(rng.uniform(0.0, 2.0))
    preds, fds = [], []
    for _ in range(n_probes):
        half = int(rng.integers(hat_min, hat_max + 1))
        center = int(rng.integers(half, N_t - half + 1))
        m = int(rng.integers(M))
        direction = rng.normal(size=family.k)
        pred, fd = functional_probe(ens, family, g, data, s, m, hat(N_t, center, half), direction, eps)
        preds.append(pred)
        fds.append(fd)
    return relative_error(preds, fds)


def gradcheck_suite(config: GradcheckConfig = GradcheckConfig()):
    if 2 * config.hat_max > config.N_t:
        raise ContractViolation(f"hat half-width {config.hat_max} does not fit in N_t={config.N_t}")
    rng = np.random.default_rng(config.seed)
    disc = [discrete_gradcheck_case(rng, config.h) for _ in range(config.n_discrete)]
    cont = [continuum_gradcheck_case(rng, config.N_t, config.eps, config.hat_min, config.hat_max, config.n_probes)
            for _ in range(config.n_continuum)]
    return GradcheckReport(disc, cont, config.tol_discrete, config.tol_continuum)


# ---------------------------------------------------------------- artifacts

def write_sweep(result: SweepResult, out_dir, config_dict, seed, dataset=None, stem=None):
    """Results CSV, manifest JSON, gnuplot data and a log-log PNG for one sweep."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = stem or result.axis
    axis_name = "L" if result.axis == "depth_L" else "M"
    value_name = "error" if result.axis == "depth_L" else "E"
    formats.write_csv(out / f"{stem}.csv", [axis_name, value_name, "seed"], result.points)
    if result.axis == "depth_L":
        xs = [row["L"] for row in result.summary]
        ys = [row["error"] for row in result.summary]
        cols = ["L", "error"]
        rows = list(zip(xs, ys))
    else:
        xs = [row["M"] for row in result.summary]
        ys = [row["std"] for row in result.summary]
        cols = ["M", "std", "mean", "bias"]
        rows = [(r["M"], r["std"], r["mean"], r["bias"]) for r in result.summary]
    formats.write_gnuplot(out / f"{stem}.dat", cols, rows,
                          comment=f"slope {result.fitted_slope:.6g} r2 {result.r2:.6g}")
    formats.write_json(formats.manifest(config_dict, seed, dataset, result=result.to_dict()),
                       out / f"{stem}_manifest.json")
    from .plotting import sweep_figure

    sweep_figure(xs, ys, result.fitted_slope, axis_name, value_name if result.axis == "depth_L" else "std of E",
                 out / f"{stem}.png")
    return out


__all__ = [
    "TaskConfig", "DepthSweepConfig", "WidthSweepConfig", "ZeroLossConfig", "StabilityConfig",
    "GradcheckConfig", "SweepResult", "ZeroLossResult", "StabilityReport", "GradcheckReport",
    "initial_particles", "loglog_fit", "depth_sweep", "width_sweep", "zero_loss_run", "support_spread",
    "stability_probe", "gradcheck_suite", "relative_error", "fd_grad_discrete", "hat", "functional_probe",
    "worker_count", "parallel_map", "write_sweep",
]
