import warnings

import numpy as np
import pytest

from gptmacro.core import in_convex_hull
from gptmacro.errors import DegenerateMatrix
from gptmacro.scenarios import counterexample_scenario, qubit_pauli_scenario, sharp_qubit_scenario, simplicial_scenario
from gptmacro.simulator import build_data_matrix, scenario_measurements
from gptmacro.tomography import (
    EXACT_VARIANCE,
    RankSelectionWarning,
    RealizedGpt,
    binomial_variance,
    default_threshold,
    degrees_of_freedom,
    fit_realized_gpt,
    inner_approx,
    rank_scan,
    reconstruct,
    select_rank,
)

from util import realized_of


def _exact_F(sc):
    _, fm = build_data_matrix(sc, sc.preparations, scenario_measurements(sc))
    return fm


def test_variance_model():
    F = np.array([[0.0, 0.5, 1.0]])
    V = binomial_variance(F, np.array([[100, 100, 100]]))
    assert np.allclose(V, [[1 / 40000, 0.0025, 1 / 40000]])
    assert np.all(binomial_variance(F, np.zeros((1, 3))) == EXACT_VARIANCE)


def test_dof_and_threshold():
    assert degrees_of_freedom(6, 7, 4) == 42 - 4 * 9
    assert default_threshold(8) == pytest.approx(1 + 3 * np.sqrt(2 / 8))


def test_select_rank_examples():
    fm = _exact_F(simplicial_scenario(2, 3))
    V = np.full(fm.F.shape, 1e-12)
    assert select_rank(fm.F, V) == 2
    fm = _exact_F(qubit_pauli_scenario())
    assert select_rank(fm.F, np.full(fm.F.shape, 1e-12)) == 4
    F = np.tile([[1.0, 0.3, 0.7]], (5, 1))
    assert select_rank(F, np.full(F.shape, 1e-12)) == 1


def test_select_rank_warns_when_nothing_fits(rng):
    F = rng.random((6, 6))
    with pytest.warns(RankSelectionWarning):
        k = select_rank(F, np.full(F.shape, 1e-12), k_max=2)
    assert k == 2


def test_rank_scan_chi2_nonincreasing(rng):
    sc = sharp_qubit_scenario(10, seed=2)
    _, fm = build_data_matrix(sc, sc.preparations, scenario_measurements(sc), n_per_cell=2000, seed=1)
    V = binomial_variance(fm.F, fm.trials)
    chi2 = [f.chi2 for f in rank_scan(fm.F, V, 6)]
    assert all(b <= a * (1 + 1e-9) + 1e-12 for a, b in zip(chi2, chi2[1:]))


def test_counterexample_fit():
    fm = _exact_F(counterexample_scenario())
    R = fit_realized_gpt(fm.F, np.full(fm.F.shape, 1e-12), 2, fm.row_ids, fm.col_ids)
    assert R.fit.residual_max <= 1e-9
    i, j = fm.row_ids.index("s1"), list(fm.col_ids).index(("M", "e"))
    assert R.probabilities()[i, j] == pytest.approx(0.75, abs=1e-6)


def test_rank_one_fit_identical_states():
    F = np.tile([[1.0, 0.3, 0.7]], (4, 1))
    R = fit_realized_gpt(F, np.full(F.shape, 1e-12), 1)
    assert np.allclose(R.states, R.states[0], atol=1e-9)


def test_degenerate_inputs():
    with pytest.raises(DegenerateMatrix):
        select_rank(np.ones((3, 3)), np.zeros((3, 3)))
    with pytest.raises(DegenerateMatrix):
        rank_scan(np.ones((3, 3)), np.ones((3, 3)), k_max=5)


@pytest.mark.parametrize(
    "sc,k", [(counterexample_scenario(), 2), (simplicial_scenario(3, 5), 3), (qubit_pauli_scenario(), 4), (sharp_qubit_scenario(), 4)]
)
def test_round_trip_and_gauge(sc, k):
    fm = _exact_F(sc)
    R = reconstruct(fm)
    assert R.k == k
    assert np.max(np.abs(R.probabilities() - fm.F)) <= 1e-7
    assert np.allclose(R.unit, np.eye(k)[0])
    assert np.allclose(R.states @ R.unit, 1.0, atol=1e-6)


def _true_to_realized(sc, R):
    """Linear map taking true state vectors to realized ones (least squares on the preparations)."""
    S_true = np.array([sc.state(p).vector for p in sc.preparations])
    X, *_ = np.linalg.lstsq(S_true, R.states, rcond=None)
    return X


@pytest.mark.parametrize("sc", [counterexample_scenario(), qubit_pauli_scenario()])
def test_inner_approximation_inside_true_polytope(sc):
    R = realized_of(sc)
    X = _true_to_realized(sc, R)
    true_gens = [s.vector @ X for s in sc.system.state_generators]
    for s in R.states:
        assert in_convex_hull(s, true_gens, tol=1e-6)


def test_inner_approx_examples():
    R = realized_of(counterexample_scenario())
    hull = inner_approx(R)
    ids = [R.state_ids[i] for i, s in enumerate(R.states) if any(np.allclose(s, h) for h in hull.states)]
    assert sorted(ids) == ["sbar1", "sbar2"]
    assert len(inner_approx(realized_of(qubit_pauli_scenario())).states) == 6
    dup = RealizedGpt(np.vstack([R.states, R.states]), R.effects)
    assert len(inner_approx(dup).states) == 2


def test_sampled_qubit_fit():
    sc = qubit_pauli_scenario()
    _, fm = build_data_matrix(sc, sc.preparations, scenario_measurements(sc), n_per_cell=10**6, seed=3)
    with warnings.catch_warnings():
        warnings.simplefilter("error", RankSelectionWarning)
        R = reconstruct(fm)
    assert R.k == 4
    assert R.fit.chi2_per_dof <= 1.2
    truth = _exact_F(sc).F
    assert np.max(np.abs(R.probabilities() - truth)) <= 0.005


def test_realized_csv_roundtrip(tmp_path):
    R = realized_of(counterexample_scenario())
    R.to_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "kind,id,c0,c1"
    back = RealizedGpt.from_csv(tmp_path / "r.csv")
    assert np.array_equal(back.states, R.states) and np.array_equal(back.effects, R.effects)
    assert back.state_ids == R.state_ids and back.effect_ids == R.effect_ids


def test_sampled_sharp_qubit_fit_has_honest_chi2():
    """A fragment with more effects than the dimension, so the rank-4 fit is overdetermined."""
    sc = sharp_qubit_scenario(12, seed=1)
    _, fm = build_data_matrix(sc, sc.preparations, scenario_measurements(sc), n_per_cell=10**5, seed=2)
    R = reconstruct(fm)
    assert R.k == 4 and R.fit.converged
    assert R.fit.dof > 100
    assert 0.7 <= R.fit.chi2_per_dof <= 1.2
    assert np.max(np.abs(R.probabilities() - _exact_F(sc).F)) <= 0.01
