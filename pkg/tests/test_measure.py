import itertools

import numpy as np
import pytest

from resnet_lab import measure
from resnet_lab.continuum import ParamPathEnsemble
from resnet_lab.errors import ContractViolation
from resnet_lab.experiments import loglog_fit


def brute_w2(a, b):
    M = len(a)
    best = min(sum(np.sum((a[i] - b[j]) ** 2) for i, j in enumerate(perm))
               for perm in itertools.permutations(range(M)))
    return np.sqrt(best / M)


def linear_paths(theta0, v, N):
    t = np.linspace(0.0, 1.0, N + 1)[:, None, None]
    return ParamPathEnsemble(theta0[None] + t * v[None])


def test_exact_matches_permutation_search():
    rng = np.random.default_rng(0)
    for _ in range(100):
        M, k = int(rng.integers(1, 7)), int(rng.integers(1, 4))
        a, b = rng.normal(size=(M, k)), rng.normal(size=(M, k))
        assert measure.w2_exact(a, b) == pytest.approx(brute_w2(a, b), rel=1e-12, abs=1e-15)


def test_metric_axioms():
    rng = np.random.default_rng(1)
    for _ in range(50):
        M = int(rng.integers(1, 7))
        a, b, c = (rng.normal(size=(M, 3)) for _ in range(3))
        ab = measure.w2_exact(a, b)
        assert measure.w2_exact(a, a) == 0.0
        assert ab == pytest.approx(measure.w2_exact(b, a), abs=1e-12)
        assert ab <= measure.w2_exact(a, c) + measure.w2_exact(c, b) + 1e-12
        # relabelling particles does not change the measure
        assert measure.w2_exact(a[rng.permutation(M)], a) == pytest.approx(0.0, abs=1e-12)


def test_translation_shifts_by_offset_norm():
    a = np.random.default_rng(2).normal(size=(5, 3))
    shift = np.array([0.3, -1.2, 0.4])
    assert measure.w2_exact(a, a + shift) == pytest.approx(np.linalg.norm(shift), rel=1e-12)


def test_one_dimensional_sorting():
    rng = np.random.default_rng(3)
    u, v = rng.normal(size=8), rng.normal(size=8)
    assert measure.w1d(u, v) == pytest.approx(measure.w2_exact(u, v), rel=1e-12)
    assert measure.w2_sliced(u, v) == pytest.approx(measure.w2_exact(u, v), rel=1e-12)


def test_sliced_is_a_lower_bound():
    rng = np.random.default_rng(4)
    for _ in range(20):
        a, b = rng.normal(size=(10, 4)), rng.normal(size=(10, 4))
        assert measure.w2_sliced(a, b, n_projections=32, seed=5) <= measure.w2_exact(a, b) + 1e-12


def test_single_particle_collapse():
    assert measure.w2_exact([[0.0, 0.0]], [[3.0, 4.0]]) == 5.0


def test_large_clouds_route_to_sliced():
    rng = np.random.default_rng(6)
    big = rng.normal(size=(measure.EXACT_LIMIT + 1, 2))
    with pytest.raises(ContractViolation, match="w2_sliced"):
        measure.w2_exact(big, big)
    assert measure.w2(big, big) == 0.0


def test_contract():
    with pytest.raises(ContractViolation):
        measure.w2_exact(np.zeros((3, 2)), np.zeros((4, 2)))
    with pytest.raises(ContractViolation):
        measure.w2_exact(np.zeros((3, 2)), np.zeros((3, 3)))
    with pytest.raises(ContractViolation):
        measure.EmpiricalMeasure(np.full((2, 2), np.nan))


def test_d1_is_worst_node():
    rng = np.random.default_rng(7)
    A = ParamPathEnsemble(rng.normal(size=(5, 3, 2)))
    B = A.copy()
    B.values[2] += np.array([0.0, 2.0])
    B.values[4] += np.array([1.0, 0.0])
    assert measure.d1(A, A) == 0.0
    assert measure.d1(A, B) == pytest.approx(2.0, rel=1e-12)
    assert measure.d2([A, A], [A, B]) == measure.d1(A, B)
    with pytest.raises(ContractViolation):
        measure.d1(A, ParamPathEnsemble(np.zeros((3, 3, 2))))


def test_second_moment():
    ens = ParamPathEnsemble.constant([[1.0, 2.0], [0.0, 2.0]], 4)
    assert measure.second_moment(ens, node=0) == 4.5
    assert measure.second_moment(ens) == pytest.approx(4.5, rel=1e-15)


def test_path_increment_of_linear_paths():
    rng = np.random.default_rng(8)
    theta0, v = rng.normal(size=(3, 5)), rng.normal(size=(3, 5))
    expected_unit = np.mean(np.sum(v ** 2, axis=1)) / 3.0
    for N in (1, 7, 32):
        ens = linear_paths(theta0, v, N)
        for L in (1, 2, 5, 16, 64):
            assert measure.path_increment(ens, L) == pytest.approx(expected_unit / L ** 2, rel=1e-12)


def test_path_increment_of_constant_paths_is_zero():
    ens = ParamPathEnsemble.constant(np.ones((2, 3)), 8)
    assert measure.path_increment(ens, 4) == 0.0
    with pytest.raises(ContractViolation):
        measure.path_increment(ens, 0)


def test_path_increment_slope_for_smooth_paths():
    rng = np.random.default_rng(9)
    t = np.linspace(0.0, 1.0, 1025)[:, None, None]
    ens = ParamPathEnsemble(rng.normal(size=(4, 3))[None] * np.sin(3 * t + rng.normal(size=(4, 3))[None]))
    Ls = [4, 8, 16, 32, 64]
    slope, _, r2 = loglog_fit(Ls, [measure.path_increment(ens, L) for L in Ls])
    assert abs(slope + 2) < 0.2
    assert r2 > 0.99


def test_admissibility_report():
    ens = linear_paths(np.zeros((2, 2)), np.ones((2, 2)), 4)
    rep = measure.admissibility_report(ens, 8)
    assert rep.sup_second_moment == pytest.approx(2.0)
    assert rep.sub_node
    assert not measure.admissibility_report(ens, 2).sub_node
