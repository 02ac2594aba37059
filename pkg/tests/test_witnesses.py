import math

import numpy as np
import pytest

from gptmacro.embedding import CONSISTENT, classify
from gptmacro.errors import NullOutcomeProbabilityZero, UnknownLabel, WrongScenarioKind
from gptmacro.scenarios import (
    classical_lg_scenario,
    classical_nsit_scenario,
    counterexample_scenario,
    hidden_macrostate_scenario,
    interferometer_scenario,
    lg_qubit_scenario,
    nsit_qubit_scenario,
    random_classical_scenario,
    simplicial_scenario,
)
from gptmacro.witnesses import (
    NullResultSpec,
    convexity_bound_check,
    disturbance,
    lg_correlators,
    nondisturbance_witness,
    nsit_delta,
    total_variation,
)

from oracles import born, density, evolve, luders, projector, unitary
from util import realized_of


# ---------------------------------------------------------------------------
# disturbance and the nondisturbance witness


def test_counterexample_disturbances():
    sc = counterexample_scenario(0.25)
    d = {s: disturbance(sc, s, "phi", "e") for s in ("sbar1", "sbar2", "s1", "s2")}
    assert d == pytest.approx({"sbar1": 1.0, "sbar2": 1.0, "s1": 0.5, "s2": 0.5}, abs=1e-12)


def test_identity_map_does_not_disturb():
    sc = counterexample_scenario(0.25)
    sc.named_transforms["id"] = type(sc.transform("phi"))(np.eye(2))
    for s in sc.named_states:
        assert disturbance(sc, s, "id", "e") == 0.0


def test_misfire_on_strictly_classical_data():
    sc = counterexample_scenario(0.25)
    rep = nondisturbance_witness(sc, controls=("s1", "s2"), test="sbar1")
    assert rep.max_control == pytest.approx(0.5) and rep.test_disturbance == pytest.approx(1.0)
    assert rep.fires
    # the same system is classified as consistent with macrorealism
    assert classify(realized_of(sc)).label == CONSISTENT


def test_no_fire_with_eigenstate_controls():
    rep = nondisturbance_witness(counterexample_scenario(0.25), controls=("sbar1", "sbar2"), test="s1")
    assert rep.max_control == pytest.approx(1.0) and rep.test_disturbance == pytest.approx(0.5)
    assert not rep.fires and rep.witness_value < 0


def test_report_invariants():
    rep = nondisturbance_witness(interferometer_scenario())
    assert rep.max_control == max(rep.control_disturbances.values())
    assert rep.fires == (rep.witness_value > rep.threshold)
    assert rep.to_dict()["control_disturbances"] == dict(rep.control_disturbances)


def test_interferometer_against_quantum_oracle():
    sc = interferometer_scenario()
    U = unitary("z", math.pi)
    P = projector((1, 0, 0))
    for label, n in (("path_L", (0, 0, 1)), ("path_R", (0, 0, -1)), ("v", (1, 0, 0))):
        rho = density(n)
        expected = abs(born(P, evolve(U, rho)) - born(P, rho))
        assert disturbance(sc, label, "phi", "e") == pytest.approx(expected, abs=1e-12)
    rep = nondisturbance_witness(sc)
    assert rep.max_control == pytest.approx(0.0, abs=1e-12)
    assert rep.test_disturbance == pytest.approx(1.0)
    assert rep.fires


def test_hidden_macrostate():
    sc = hidden_macrostate_scenario()
    rep = nondisturbance_witness(sc)
    assert rep.max_control == 0.0 and rep.test_disturbance == 1.0 and rep.fires
    # the scenario's own data, and the full three-outcome discrimination of the same simplex
    assert classify(realized_of(sc)).label == CONSISTENT
    assert classify(realized_of(simplicial_scenario(3))).label == CONSISTENT


def test_sampled_witness():
    sc = counterexample_scenario(0.25)
    rep = nondisturbance_witness(sc, n_trials=10**5, seed=3)
    assert rep.mode == "sampled" and rep.fires
    # sbar1 outcomes are deterministic, so only the s1 control (3/4 vs 1/4) contributes variance
    assert rep.threshold == pytest.approx(3 * math.sqrt(2 * 0.1875 / 1e5), rel=0.05)
    assert rep.test_disturbance == pytest.approx(1.0, abs=0.01)
    again = nondisturbance_witness(sc, n_trials=10**5, seed=3)
    assert again == rep
    assert not nondisturbance_witness(sc, controls=("sbar1", "sbar2"), test="s1", n_trials=10**5, seed=3).fires


def test_null_conditioning():
    sc = nsit_qubit_scenario()
    sc.roles.update(phi="Z", effect="x+", controls=("init",), test="init")
    rep = nondisturbance_witness(sc, conditioning="null")
    assert rep.conditioning == "null"
    # conditioning on the null branch of a Z measurement leaves -Z, so x+ drops from 1 to 1/2
    assert rep.test_disturbance == pytest.approx(0.5)
    with pytest.raises(ValueError):
        nondisturbance_witness(sc, conditioning="sideways")


def test_unknown_label():
    with pytest.raises(UnknownLabel):
        disturbance(counterexample_scenario(), "nope", "phi", "e")


# ---------------------------------------------------------------------------
# convexity bound


def test_convexity_bound_counterexample():
    sc = counterexample_scenario(0.25)
    assert convexity_bound_check(sc, controls=("sbar1", "sbar2"), n_random=1000, seed=1)
    # the uniform mixture of the two vertices is swap invariant
    G = sc.system
    sc.named_states["mid"] = G.mixture([0.5, 0.5])
    assert disturbance(sc, "mid", "phi", "e") == pytest.approx(0.0, abs=1e-15)


def test_convexity_bound_random_classical(rng):
    for _ in range(10):
        sc = random_classical_scenario(rng)
        assert convexity_bound_check(sc, n_random=1000, seed=int(rng.integers(1 << 31)))
        # direct evaluation through the public disturbance for a few mixtures
        d = [disturbance(sc, c, "phi", "e") for c in sc.role("controls")]
        S = np.array([sc.state(c).vector for c in sc.role("controls")])
        for a in rng.dirichlet(np.ones(len(S)), size=5):
            sc.named_states["mix"] = type(sc.state("c0"))(a @ S)
            assert disturbance(sc, "mix", "phi", "e") <= max(d) + 1e-9


# ---------------------------------------------------------------------------
# Leggett-Garg


def _lg_oracle(theta):
    """Three-time correlators by direct Lüders updates on density matrices."""
    U = unitary("y", theta)
    Pp, Pm = projector((0, 0, 1)), projector((0, 0, -1))
    rho0 = density((0, 0, 1))

    def corr(first_at, second_at):
        total = 0.0
        for a, Pa in ((1, Pp), (-1, Pm)):
            r = rho0
            for _ in range(first_at - 1):
                r = evolve(U, r)
            r = luders(Pa, r)
            for _ in range(second_at - first_at):
                r = evolve(U, r)
            for b, Pb in ((1, Pp), (-1, Pm)):
                total += a * b * born(Pb, r)
        return total

    return corr(1, 2), corr(2, 3), corr(1, 3)


@pytest.mark.parametrize("theta", [0.0, math.pi / 3, 0.7, 2.0])
def test_lg_matches_oracle(theta):
    rep = lg_correlators(lg_qubit_scenario(theta))
    c12, c23, c13 = _lg_oracle(theta)
    assert (rep.C12, rep.C23, rep.C13) == pytest.approx((c12, c23, c13), abs=1e-12)
    assert rep.K3 == pytest.approx(rep.C12 + rep.C23 - rep.C13, abs=1e-12)


def test_lg_canonical_values():
    rep = lg_correlators(lg_qubit_scenario(), theta=math.pi / 3)
    assert rep.K3 == pytest.approx(1.5, abs=1e-9) and rep.violated
    frozen = lg_correlators(lg_qubit_scenario(0.0))
    assert (frozen.C12, frozen.C23, frozen.C13) == pytest.approx((1, 1, 1))
    assert not frozen.violated


def test_lg_sampled():
    rep = lg_correlators(lg_qubit_scenario(math.pi / 3), n_trials=10**5, seed=1)
    assert rep.mode == "sampled"
    assert abs(rep.K3 - 1.5) < 0.03 and rep.violated


def test_lg_classical_bound(rng):
    for _ in range(100):
        T = rng.dirichlet(np.ones(2), size=2).T
        rep = lg_correlators(classical_lg_scenario(T, rng.dirichlet(np.ones(2))))
        assert rep.K3 <= 1 + 1e-9
        for c in (rep.C12, rep.C23, rep.C13):
            assert -1 - 1e-12 <= c <= 1 + 1e-12


def test_lg_wrong_kind():
    with pytest.raises(WrongScenarioKind):
        lg_correlators(counterexample_scenario())
    with pytest.raises(WrongScenarioKind):
        lg_correlators(classical_lg_scenario(np.eye(2), (1, 0)), theta=0.1)


# ---------------------------------------------------------------------------
# no-signaling in time


def test_nsit_qubit_against_oracle():
    rho = density((1, 0, 0))
    Px = projector((1, 0, 0))
    after = sum(luders(projector(m), rho) for m in ((0, 0, 1), (0, 0, -1)))
    expected = abs(born(Px, after) - born(Px, rho))  # two outcomes: TV = |difference|
    rep = nsit_delta(nsit_qubit_scenario())
    assert rep.delta == pytest.approx(expected, abs=1e-12)
    assert rep.delta == pytest.approx(0.5, abs=1e-9) and rep.violated
    null = nsit_delta(nsit_qubit_scenario(), NullResultSpec("Z", "-"))
    assert null.delta == pytest.approx(0.5, abs=1e-9) and null.mode == "null-conditioned"


def test_nsit_nondisturbing_cases():
    assert nsit_delta(nsit_qubit_scenario(), "id").delta == pytest.approx(0.0, abs=1e-12)
    rep = nsit_delta(classical_nsit_scenario((0.3, 0.7)))
    assert rep.delta == pytest.approx(0.0, abs=1e-9) and not rep.violated
    rep = nsit_delta(classical_nsit_scenario((0.3, 0.7)), NullResultSpec("D", "2"))
    assert rep.delta == pytest.approx(0.3, abs=1e-9)  # conditioning itself updates the bit


def test_nsit_null_zero_and_bad_spec():
    with pytest.raises(NullOutcomeProbabilityZero):
        nsit_delta(classical_nsit_scenario((1.0, 0.0)), NullResultSpec("D", "2"))
    with pytest.raises(UnknownLabel):
        nsit_delta(nsit_qubit_scenario(), NullResultSpec("Z", "maybe"))


def test_nsit_sampled():
    rep = nsit_delta(nsit_qubit_scenario(), n_trials=10**5, seed=2)
    assert abs(rep.delta - 0.5) < 0.02 and rep.violated
    rep = nsit_delta(classical_nsit_scenario(), n_trials=10**5, seed=2)
    assert not rep.violated and 0.0 <= rep.delta <= 1.0


def test_total_variation_metric(rng):
    keys = list("abcd")
    for _ in range(200):
        p, q, r = (dict(zip(keys, rng.dirichlet(np.ones(4)))) for _ in range(3))
        assert total_variation(p, q) == pytest.approx(total_variation(q, p), abs=1e-15)
        assert total_variation(p, r) <= total_variation(p, q) + total_variation(q, r) + 1e-15
        assert total_variation(p, p) == 0.0
        assert 0.0 <= total_variation(p, q) <= 1.0
    assert total_variation({"a": 1.0}, {"b": 1.0}) == 1.0
