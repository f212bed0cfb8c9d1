import numpy as np
import pytest

from resnet_lab import continuum, discrete
from resnet_lab.activation import ActivationFamily
from resnet_lab.continuum import ParamPathEnsemble
from resnet_lab.dataset import MeasuringFunction, eval_g, generate
from resnet_lab.discrete import ParamGrid
from resnet_lab.errors import ContractViolation, ParseError
from resnet_lab.flow import (
    FlowConfig,
    FlowTrace,
    energy_audit,
    flow_continuum,
    flow_discrete,
    regularizer_identity_error,
)

DECAY_AT_1 = float(np.exp(-2.0 * (1.0 - np.exp(-1.0))))  # 0.28248...


@pytest.fixture
def task():
    fam = ActivationFamily("difference", 2)
    g = MeasuringFunction([1.0, -0.5], 0.1)
    data = generate(0, 4, 2, 1.0, "trig")
    return fam, g, data


def silent_particles(rng, fam, count):
    """Particles with equal branches, so every residual field is identically zero."""
    out = []
    for _ in range(count):
        A, a = rng.normal(size=(fam.d, fam.d)), rng.normal(size=fam.d)
        out.append(fam.join(A, a, A, a))
    return np.array(out)


def test_pure_regularizer_discrete_matches_closed_form(task):
    fam, g, data = task
    interp = data.with_labels(eval_g(g, data.x))
    rng = np.random.default_rng(0)
    theta0 = silent_particles(rng, fam, 6).reshape(2, 3, fam.k)
    final, trace = flow_discrete(ParamGrid(theta0), fam, g, interp,
                                 FlowConfig(h_s=1e-3, steps=1000, snapshot_every=100))
    assert np.allclose(final.theta, theta0 * DECAY_AT_1, rtol=2e-3)
    # the batched width sum cancels the two branches only up to rounding
    assert max(trace.E) < 1e-25
    assert np.all(np.diff(trace.second_moment) < 0)


def test_pure_regularizer_continuum_rk4(task):
    fam, g, data = task
    interp = data.with_labels(eval_g(g, data.x))
    rng = np.random.default_rng(1)
    t = np.linspace(0, 1, 5)[:, None, None]
    vals = silent_particles(rng, fam, 3)[None] * (1 + t)
    final, _ = flow_continuum(ParamPathEnsemble(vals), fam, g, interp,
                              cfg=FlowConfig(h_s=0.05, steps=20, integrator="rk4", snapshot_every=20))
    assert np.allclose(final.values, vals * DECAY_AT_1, rtol=1e-6)


def test_single_euler_step_reevaluates(task):
    fam, g, data = task
    rng = np.random.default_rng(2)
    grid = ParamGrid(rng.normal(size=(3, 2, fam.k)))
    h = 0.01
    final, trace = flow_discrete(grid, fam, g, data, FlowConfig(h_s=h, steps=1))
    E0, G0 = discrete.loss_and_grad(grid, fam, g, data)
    velocity = -grid.L * grid.M * G0 - 2.0 * grid.theta
    assert np.allclose(final.theta, grid.theta + h * velocity, rtol=1e-14, atol=1e-15)
    assert trace.E[0] == E0
    assert trace.grad_norm[0] == pytest.approx(np.linalg.norm(velocity), rel=1e-14)
    assert trace.E[1] == discrete.loss(final, fam, g, data)
    assert trace.s == [0.0, h]


def test_continuum_step_uses_force_table(task):
    fam, g, data = task
    rng = np.random.default_rng(3)
    ens = ParamPathEnsemble(rng.normal(size=(5, 2, fam.k)))
    final, _ = flow_continuum(ens, fam, g, data, cfg=FlowConfig(h_s=0.01, steps=1, s0=0.5))
    G = continuum.functional_grad(ens, fam, g, data, s=0.5)
    assert np.allclose(final.values, ens.values - 0.01 * G, rtol=1e-14, atol=1e-15)


def test_flow_is_deterministic(task):
    fam, g, data = task
    grid = ParamGrid(np.random.default_rng(4).normal(size=(2, 2, fam.k)))
    cfg = FlowConfig(h_s=1e-3, steps=50, snapshot_every=10)
    (a, ta), (b, tb) = flow_discrete(grid, fam, g, data, cfg), flow_discrete(grid, fam, g, data, cfg)
    assert a == b
    assert ta.checksum() == tb.checksum()
    assert len(ta) == 6


def test_energy_decreases_and_identity_holds(task):
    fam, g, data = task
    ens = ParamPathEnsemble.constant(np.random.default_rng(5).normal(size=(4, fam.k)), 8)
    _, trace = flow_continuum(ens, fam, g, data, cfg=FlowConfig(h_s=1e-3, steps=200))
    assert energy_audit(trace).passed
    assert not trace.violations
    assert regularizer_identity_error(trace) < 1e-12


def test_audit_flags_injected_uptick():
    trace = FlowTrace()
    for i, Es in enumerate([1.0, 0.9, 0.95, 0.8, 0.8 + 5e-11]):
        trace.append(0.1 * i, Es, Es, 0.0, 0.0, 0.0)
    audit = energy_audit(trace, slack=1e-10)
    assert not audit.passed
    assert [v[0] for v in audit.violations] == [1]
    assert audit.violations[0][3] == pytest.approx(0.05)
    assert audit.n_pairs == 4


def test_trace_requires_increasing_s():
    trace = FlowTrace()
    trace.append(0.0, 1, 1, 0, 0, 0)
    with pytest.raises(ContractViolation):
        trace.append(0.0, 1, 1, 0, 0, 0)


def test_trace_csv_roundtrip(tmp_path, task):
    fam, g, data = task
    grid = ParamGrid(np.random.default_rng(6).normal(size=(2, 1, fam.k)))
    _, trace = flow_discrete(grid, fam, g, data, FlowConfig(h_s=1e-2, steps=5))
    path = tmp_path / "trace.csv"
    trace.to_csv(path)
    back = FlowTrace.from_csv(path)
    assert back.rows() == trace.rows()
    path.write_text("s,E\n0,1\n")
    with pytest.raises(ParseError):
        FlowTrace.from_csv(path)


def test_checksum_ignores_wall_clock():
    a, b = FlowTrace(), FlowTrace()
    a.append(0.0, 1.0, 1.0, 0.0, 0.0, 3.0)
    b.append(0.0, 1.0, 1.0, 0.0, 0.0, 99.0)
    assert a.checksum() == b.checksum()


def test_fixed_point_stays_put(task):
    fam, g, data = task
    interp = data.with_labels(eval_g(g, data.x))
    zero = ParamGrid.zeros(3, 2, fam)
    final, trace = flow_discrete(zero, fam, g, interp, FlowConfig(h_s=0.1, steps=10))
    assert final == zero
    assert set(trace.grad_norm) == {0.0}


def test_config_contract(task):
    for bad in (dict(h_s=0.0), dict(steps=0), dict(integrator="leapfrog"), dict(snapshot_every=0), dict(s0=-1)):
        with pytest.raises(ContractViolation):
            FlowConfig(**bad)
    fam, g, data = task
    ens = ParamPathEnsemble.zeros(2, 4, fam)
    with pytest.raises(ContractViolation):
        flow_continuum(ens, fam, g, data)
    with pytest.raises(ContractViolation):
        flow_continuum(ens, fam, g, data, continuum.DepthGrid(8), FlowConfig())
