import math

import numpy as np
import pytest

from gptmacro.core import GptEffect, in_convex_hull, probability
from gptmacro.errors import NoiseOutOfRange, RateOutOfRange, UnknownLabel
from gptmacro.scenarios import (
    BUILTIN,
    bloch_state,
    build_scenario,
    counterexample_scenario,
    depolarize,
    interferometer_scenario,
    lg_qubit_scenario,
    measure_reprepare,
    nsit_qubit_scenario,
    projector_effect,
    rotation,
    validate_scenario,
)
from gptmacro.simulator import Schedule, exact_distribution

from oracles import PAULI, I2, born, density, evolve, luders, projector, random_unit, unitary


def test_counterexample_states():
    sc = counterexample_scenario(0.25)
    assert np.allclose(sc.state("s1").vector, [0.75, 0.25])
    assert np.allclose(sc.state("s2").vector, [0.25, 0.75])
    assert np.allclose(counterexample_scenario(0.0).state("s1").vector, sc.state("sbar1").vector)
    half = counterexample_scenario(0.5)
    assert np.allclose(half.state("s1").vector, [0.5, 0.5])
    assert np.allclose(half.state("s2").vector, [0.5, 0.5])
    with pytest.raises(NoiseOutOfRange):
        counterexample_scenario(0.6)


@pytest.mark.parametrize("noise", np.linspace(0, 0.5, 11))
def test_counterexample_states_in_vertex_hull(noise):
    sc = counterexample_scenario(noise)
    verts = [sc.state("sbar1").vector, sc.state("sbar2").vector]
    for lab in ("s1", "s2"):
        assert in_convex_hull(sc.state(lab).vector, verts)


@pytest.mark.parametrize("name", sorted(set(BUILTIN) - {"classical_lg"}))
def test_builtin_scenarios_validate(name):
    assert not validate_scenario(build_scenario(name)).violations


def test_unknown_names():
    with pytest.raises(UnknownLabel):
        build_scenario("nope")
    with pytest.raises(UnknownLabel):
        counterexample_scenario().state("s9")


def test_interferometer_probabilities():
    sc = interferometer_scenario()
    e, phi = sc.effect("e").vector, sc.transform("phi").matrix
    R, v = sc.state("path_R").vector, sc.state("v").vector
    assert e @ R == pytest.approx(0.5) and e @ phi @ R == pytest.approx(0.5)
    assert e @ v == pytest.approx(1.0) and e @ phi @ v == pytest.approx(0.0, abs=1e-12)
    wl = sc.effect("which_L").vector
    for p in ("path_L", "path_R"):
        s = sc.state(p).vector
        assert wl @ phi @ s == pytest.approx(wl @ s, abs=1e-12)


def test_lg_theta_zero_is_identity():
    assert np.allclose(lg_qubit_scenario(0.0).transform("evolve").matrix, np.eye(4))


def test_nsit_scenario_probabilities():
    sc = nsit_qubit_scenario()
    plain = exact_distribution(sc, Schedule("init", "X"))
    assert plain["x+"] == pytest.approx(1.0)
    mid = exact_distribution(sc, Schedule("init", "X", ("Z",))).marginal(-1)
    assert mid["x+"] == pytest.approx(0.5)
    ident = exact_distribution(sc, Schedule("init", "X", ("id",))).marginal(-1)
    assert ident["x+"] == pytest.approx(1.0)


def test_depolarize_examples():
    sc = counterexample_scenario()
    assert all(np.array_equal(depolarize(sc, 0).state(k).vector, s.vector) for k, s in sc.named_states.items())
    full = depolarize(sc, 1.0)
    assert all(np.allclose(s.vector, [0.5, 0.5]) for s in full.named_states.values())
    q = depolarize(lg_qubit_scenario(), 0.5)
    assert np.linalg.norm(q.state("init").vector[1:]) == pytest.approx(0.5)
    with pytest.raises(RateOutOfRange):
        depolarize(sc, 1.5)


def test_depolarize_affine_in_r():
    sc = interferometer_scenario()
    for k in sc.named_states:
        a, b, m = (depolarize(sc, r).state(k).vector for r in (0.0, 1.0, 0.5))
        assert np.allclose(m, 0.5 * (a + b), rtol=1e-12, atol=1e-15)


def _random_effect(rng):
    # E = alpha I + beta m.sigma with 0 <= E <= I
    m = random_unit(rng)
    alpha = rng.random()
    beta = rng.uniform(-1, 1) * min(alpha, 1 - alpha)
    return GptEffect(np.concatenate([[alpha], beta * m])), alpha * I2 + beta * sum(m[i] * PAULI[a] for i, a in enumerate("xyz"))


def test_qubit_model_matches_density_matrix_oracle(rng):
    """1000 random (state, effect, instrument sequence) triples."""
    worst = 0.0
    for _ in range(1000):
        n = random_unit(rng) * rng.random() ** (1 / 3)
        s, rho = bloch_state(n).vector, density(n)
        for _ in range(rng.integers(0, 4)):
            if rng.random() < 0.5:
                axis, ang = "xyz"[rng.integers(3)], rng.uniform(-math.pi, math.pi)
                s = rotation(axis, ang).matrix @ s
                rho = evolve(unitary(axis, ang), rho)
            else:
                m = random_unit(rng)
                sign = 1 if rng.random() < 0.5 else -1
                inst = measure_reprepare({"+": m, "-": -m})
                s = inst.branch("+" if sign > 0 else "-").matrix @ s
                rho = luders(projector(sign * m), rho)
        e, E = _random_effect(rng)
        worst = max(worst, abs(e.vector @ s - born(E, rho)))
    assert worst < 1e-9


def test_bloch_length_bounded():
    for name in ("qubit_pauli", "sharp_qubit", "interferometer", "rebit_xz"):
        sc = build_scenario(name)
        for s in sc.named_states.values():
            assert np.linalg.norm(s.vector[1:]) <= 1 + 1e-9


def test_qubit_probability_agrees_with_bloch_formula(rng):
    for _ in range(100):
        n, m = random_unit(rng), random_unit(rng)
        p = probability(projector_effect(m), bloch_state(n))
        assert p == pytest.approx((1 + n @ m) / 2, abs=1e-12)
