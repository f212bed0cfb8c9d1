import json

import numpy as np
import pytest

from resnet_lab import discrete, experiments
from resnet_lab.activation import ActivationFamily, softplus
from resnet_lab.continuum import ParamPathEnsemble
from resnet_lab.dataset import Dataset, eval_g, save_csv
from resnet_lab.errors import ContractViolation
from resnet_lab.experiments import (
    DepthSweepConfig,
    GradcheckConfig,
    StabilityConfig,
    TaskConfig,
    WidthSweepConfig,
    ZeroLossConfig,
)
from resnet_lab.flow import FlowConfig, energy_audit, flow_discrete

SMALL_TASK = TaskConfig(n=3, teacher_L=2, teacher_M=2)


@pytest.fixture
def interpolated_task(tmp_path):
    """Labels equal to ``g(x)``, so the identity network already fits them."""
    family, g, data = SMALL_TASK.build()
    path = tmp_path / "interp.csv"
    save_csv(Dataset(data.x, eval_g(g, data.x), data.radius), path)
    return TaskConfig(n=3, path=str(path))


def test_initial_particles_are_truncated_and_reproducible():
    a = experiments.initial_particles(np.random.default_rng(0), 500, 4, scale=2.0, truncate=1.0)
    b = experiments.initial_particles(np.random.default_rng(0), 500, 4, scale=2.0, truncate=1.0)
    assert np.array_equal(a, b)
    assert np.abs(a).max() <= 2.0
    with pytest.raises(ContractViolation):
        experiments.initial_particles(np.random.default_rng(0), 0, 4)


def test_loglog_fit_recovers_power_law():
    x = np.array([2.0, 4.0, 8.0, 16.0])
    slope, (lo, hi), r2 = experiments.loglog_fit(x, 3.0 * x ** -1.5)
    assert slope == pytest.approx(-1.5, rel=1e-12)
    assert r2 == pytest.approx(1.0)
    assert lo <= slope <= hi
    with pytest.raises(ContractViolation):
        experiments.loglog_fit([1.0, 2.0], [1.0, 0.5])


def test_task_config_roundtrip_and_unknown_keys():
    cfg = TaskConfig(g_w=(1.0, 2.0))
    assert TaskConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ContractViolation, match="unknown key task.colour"):
        TaskConfig.from_dict({"colour": 1})
    nested = DepthSweepConfig.from_dict({"task": {"n": 5}, "Ls": [2, 4, 8]})
    assert nested.task.n == 5 and nested.Ls == (2, 4, 8)


def test_default_task_is_teacher_labelled():
    family, g, data = TaskConfig().build()
    teacher = TaskConfig().teacher()
    assert (data.n, data.d) == (4, 2)
    assert discrete.loss(teacher, family, g, data) == 0.0


def test_student_equal_to_teacher_never_climbs():
    family, g, data = SMALL_TASK.build()
    teacher = SMALL_TASK.teacher()
    E0, G0 = discrete.loss_and_grad(teacher, family, g, data)
    assert E0 == 0.0 and np.all(G0 == 0.0)
    _, trace = flow_discrete(teacher, family, g, data, FlowConfig(h_s=1e-3, steps=100))
    assert trace.E[0] == 0.0
    assert energy_audit(trace).passed
    assert trace.E_s[-1] <= trace.E_s[0]


def test_depth_sweep_small():
    cfg = DepthSweepConfig(task=SMALL_TASK, Ls=(2, 4, 8), M=2, S=0.2, h_s=0.05, ref_factor=4)
    res = experiments.depth_sweep(cfg)
    assert [p[0] for p in res.points] == [2, 4, 8]
    errors = [row["error"] for row in res.summary]
    assert errors[0] > errors[1] > errors[2] > 0
    assert res.identity_error < 1e-12
    assert np.isfinite(res.fitted_slope)


def test_depth_sweep_degenerate_on_interpolated_data(interpolated_task):
    cfg = DepthSweepConfig(task=interpolated_task, Ls=(2, 4, 8), M=2, S=0.2, h_s=0.05, zero_init=True)
    res = experiments.depth_sweep(cfg)
    assert max(row["error"] for row in res.summary) < 1e-12
    assert res.flags and np.isnan(res.fitted_slope)


def test_depth_sweep_needs_three_depths():
    with pytest.raises(ContractViolation):
        experiments.depth_sweep(DepthSweepConfig(Ls=(8, 16)))


def test_width_sweep_shared_draw_has_no_spread():
    cfg = WidthSweepConfig(task=SMALL_TASK, Ms=(2, 3, 4), n_seeds=5, N_t=2, S=0.1, h_s=0.05, shared_draw=True)
    res = experiments.width_sweep(cfg)
    assert all(row["std"] == 0.0 for row in res.summary)
    assert res.flags
    assert len(res.points) == 15


def test_width_sweep_small():
    cfg = WidthSweepConfig(task=SMALL_TASK, Ms=(2, 4, 8), n_seeds=5, N_t=2, S=0.1, h_s=0.05, M_ref=16)
    res = experiments.width_sweep(cfg)
    assert all(row["std"] > 0 for row in res.summary)
    assert not any("self-comparison" in f for f in res.flags)
    assert res.identity_error < 1e-12


def test_width_sweep_contract():
    with pytest.raises(ContractViolation):
        experiments.width_sweep(WidthSweepConfig(n_seeds=4))
    with pytest.raises(ContractViolation):
        experiments.width_sweep(WidthSweepConfig(Ms=(8, 16)))


def test_zero_loss_run_short():
    cfg = ZeroLossConfig(task=SMALL_TASK, M=4, N_t=4, steps=200, h_s=1e-3, burn_in=10)
    res = experiments.zero_loss_run(cfg)
    assert len(res.trace) == 201
    assert res.final_E == res.trace.E[-1]
    assert res.final_E < res.trace.E[0]
    assert not res.audit_violations
    assert res.identity_error < 1e-12
    assert res.support_spread.shape == (5, 2)


def test_stability_closed_form_for_offset_particles():
    # only the first-branch offsets move, so f is constant in z and Z(1) - x is
    # the width average of softplus(delta u_m) - softplus(0)
    cfg = StabilityConfig(task=SMALL_TASK, M=3, N_t=4, deltas=(0.0, 1e-3, 1e-2, 1e-1))
    family = ActivationFamily("difference", 2)
    rng = np.random.default_rng(3)
    dirs = np.zeros((3, family.k))
    dirs[:, 4:6] = rng.normal(size=(3, 2))
    unit = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    rep = experiments.stability_probe(cfg, ParamPathEnsemble.zeros(3, 4, family), dirs)
    assert rep.deltas == [1e-3, 1e-2, 1e-1]
    assert "delta=0 skipped" in rep.notes[0]
    for delta, ratio in zip(rep.deltas, rep.ratio_Z):
        shift = np.mean(softplus(delta * unit[:, 4:6]) - softplus(0.0), axis=0)
        assert ratio == pytest.approx(np.linalg.norm(shift) / delta, rel=1e-10)
    assert rep.passed


def test_stability_default_passes():
    rep = experiments.stability_probe(StabilityConfig(task=SMALL_TASK, N_t=8))
    assert rep.passed
    assert all(np.isfinite(rep.ratio_Z))


def test_interpolating_configs_have_zero_gradients(interpolated_task):
    family, g, data = interpolated_task.build()
    assert np.all(discrete.grad(discrete.ParamGrid.zeros(3, 2, family), family, g, data) == 0.0)


def test_gradcheck_suite_small():
    cfg = GradcheckConfig(n_discrete=3, n_continuum=2, N_t=64, hat_min=8, hat_max=16)
    rep = experiments.gradcheck_suite(cfg)
    assert rep.passed
    assert len(rep.discrete_errors) == 3 and len(rep.continuum_errors) == 2
    with pytest.raises(ContractViolation):
        experiments.gradcheck_suite(GradcheckConfig(N_t=16))


def test_relative_error():
    assert experiments.relative_error([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert experiments.relative_error([1.1, 2.0], [1.0, 2.0]) == pytest.approx(0.05)
    assert experiments.relative_error([0.0], [0.0]) == 0.0
    assert experiments.relative_error([1.0], [0.0]) == float("inf")


def test_worker_count(monkeypatch):
    monkeypatch.setenv(experiments.THREADS_ENV, "3")
    assert experiments.worker_count() == 3
    monkeypatch.setenv(experiments.THREADS_ENV, "0")
    assert experiments.worker_count() == 1
    monkeypatch.setenv(experiments.THREADS_ENV, "many")
    with pytest.raises(ContractViolation):
        experiments.worker_count()


def test_write_sweep_artifacts(tmp_path):
    res = experiments.SweepResult(
        "depth_L", [(2, 0.1, 1), (4, 0.05, 1), (8, 0.025, 1)], -1.0, (-1.0, -1.0), 1.0,
        summary=[{"L": L, "error": e} for L, e in ((2, 0.1), (4, 0.05), (8, 0.025))],
    )
    experiments.write_sweep(res, tmp_path, {"Ls": [2, 4, 8]}, seed=1)
    for name in ("depth_L.csv", "depth_L.dat", "depth_L_manifest.json", "depth_L.png"):
        assert (tmp_path / name).stat().st_size > 0
    manifest = json.loads((tmp_path / "depth_L_manifest.json").read_text())
    assert manifest["seed"] == 1
    assert (tmp_path / "depth_L.csv").read_text().splitlines()[0] == "L,error,seed"
