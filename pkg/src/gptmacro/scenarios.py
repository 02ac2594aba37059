"""Ground-truth scenarios: noisy classical bits, qubits written as GPTs, noise.

Qubit convention: a state with Bloch vector ``n`` is the 4-vector
``(1, n_x, n_y, n_z)``; the effect ``a*I + b.sigma`` is ``(a, b_x, b_y, b_z)``,
so the Born rule is the plain dot product.  The rank-1 projector along unit
direction ``m`` is ``(1, m) / 2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .core import (
    ABS_TOL,
    GptEffect,
    GptState,
    GptSystem,
    GptTransformation,
    Instrument,
    ValidationReport,
    Violation,
    check_effect,
    check_instrument,
    check_state,
    check_transformation,
    make_simplicial,
)
from .errors import NoiseOutOfRange, RateOutOfRange, UnknownLabel

GROUND_TRUTH_CLASSES = ("StrictlyClassical", "Quantum", "Other")

PAULI_AXES = {"x": (1.0, 0.0, 0.0), "y": (0.0, 1.0, 0.0), "z": (0.0, 0.0, 1.0)}


@dataclass(frozen=True)
class QubitModel(GptSystem):
    """A qubit as a 4-dimensional GPT; generators are the Pauli octahedron."""

    def bloch(self, state: GptState) -> np.ndarray:
        v = state.vector
        return v[1:] / v[0]


@dataclass(frozen=True)
class Scenario:
    name: str
    system: GptSystem
    named_states: Mapping[str, GptState]
    named_effects: Mapping[str, GptEffect] = field(default_factory=dict)
    named_instruments: Mapping[str, Instrument] = field(default_factory=dict)
    named_transforms: Mapping[str, GptTransformation] = field(default_factory=dict)
    ground_truth_class: str = "Other"
    # destructive measurements, each a tuple of effect labels summing to u
    measurements: Mapping[str, tuple] = field(default_factory=dict)
    # default preparation list for tomography runs
    preparations: tuple = ()
    # default labels used by the witnesses (phi, effect, controls, test, ...)
    roles: Mapping[str, object] = field(default_factory=dict)
    # instrument label -> outcome label -> numerical value (LG observables)
    outcome_values: Mapping[str, Mapping[str, float]] = field(default_factory=dict)
    params: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.ground_truth_class not in GROUND_TRUTH_CLASSES:
            raise ValueError(f"unknown ground truth class {self.ground_truth_class!r}")
        if not self.preparations:
            object.__setattr__(self, "preparations", tuple(self.named_states))

    def state(self, label: str) -> GptState:
        try:
            return self.named_states[label]
        except KeyError:
            raise UnknownLabel(f"scenario {self.name!r} has no state {label!r}") from None

    def effect(self, label: str) -> GptEffect:
        if label in self.named_effects:
            return self.named_effects[label]
        if label == "u":
            return self.system.unit
        raise UnknownLabel(f"scenario {self.name!r} has no effect {label!r}")

    def transform(self, label: str) -> GptTransformation:
        if label in self.named_transforms:
            return self.named_transforms[label]
        if label == "identity":
            return GptTransformation(np.eye(self.system.dim))
        raise UnknownLabel(f"scenario {self.name!r} has no transformation {label!r}")

    def instrument(self, label: str) -> Instrument:
        try:
            return self.named_instruments[label]
        except KeyError:
            raise UnknownLabel(f"scenario {self.name!r} has no instrument {label!r}") from None

    def measurement(self, label: str) -> tuple:
        try:
            return tuple(self.measurements[label])
        except KeyError:
            raise UnknownLabel(f"scenario {self.name!r} has no measurement {label!r}") from None

    def role(self, key: str):
        try:
            return self.roles[key]
        except KeyError:
            raise UnknownLabel(f"scenario {self.name!r} does not define role {key!r}") from None


def validate_scenario(scenario: Scenario, tol: float = ABS_TOL) -> ValidationReport:
    """Check every named object of ``scenario`` against its system."""
    report = ValidationReport()
    sysm = scenario.system
    for label, s in scenario.named_states.items():
        report.extend(_tag(check_state(sysm, s, tol=tol), label))
        if isinstance(sysm, QubitModel) and s.vector[0] > tol:
            r = float(np.linalg.norm(sysm.bloch(s)))
            if r > 1 + tol:
                report.extend([Violation("OutsideBlochBall", (label,), r - 1)])
    for label, e in scenario.named_effects.items():
        report.extend(_tag(check_effect(sysm, e, tol=tol), label))
    for label, T in scenario.named_transforms.items():
        report.extend(_tag(check_transformation(sysm, T, tol=tol), label))
    for label, inst in scenario.named_instruments.items():
        report.extend(_tag(check_instrument(sysm, inst, tol=tol), label))
    for label, effects in scenario.measurements.items():
        total = sum(scenario.effect(x).vector for x in effects)
        gap = float(np.max(np.abs(total - sysm.unit.vector)))
        if gap > tol:
            report.extend([Violation("IncompleteMeasurement", (label,), gap)])
    return report


def _tag(violations, label):
    return [Violation(v.kind, (label,) + v.indices, v.magnitude, v.detail) for v in violations]


# --- qubit building blocks ----------------------------------------------------

def bloch_state(n) -> GptState:
    n = np.asarray(n, dtype=float)
    return GptState(np.concatenate([[1.0], n]), 1.0)


def projector_effect(m) -> GptEffect:
    """Rank-1 projector onto the pure state with unit Bloch vector ``m``."""
    m = np.asarray(m, dtype=float)
    return GptEffect(0.5 * np.concatenate([[1.0], m]))


def rotation(axis: str, angle: float) -> GptTransformation:
    """Bloch-sphere rotation about a Pauli axis (a unitary channel)."""
    c, s = math.cos(angle), math.sin(angle)
    if axis == "x":
        R = [[1, 0, 0], [0, c, -s], [0, s, c]]
    elif axis == "y":
        R = [[c, 0, s], [0, 1, 0], [-s, 0, c]]
    elif axis == "z":
        R = [[c, -s, 0], [s, c, 0], [0, 0, 1]]
    else:
        raise ValueError(f"axis must be x, y or z, not {axis!r}")
    M = np.eye(4)
    M[1:, 1:] = R
    return GptTransformation(M, kind="preserving")


def measure_reprepare(directions: Mapping[str, np.ndarray]) -> Instrument:
    """Instrument whose branch ``k`` measures projector ``k`` and reprepares its eigenstate."""
    branches, labels = [], []
    for label, m in directions.items():
        s, e = bloch_state(m), projector_effect(m)
        branches.append(GptTransformation(np.outer(s.vector, e.vector), kind="nonincreasing"))
        labels.append(label)
    return Instrument(tuple(branches), tuple(labels))


def pauli_instrument(axis: str) -> Instrument:
    a = np.array(PAULI_AXES[axis])
    return measure_reprepare({"+": a, "-": -a})


def qubit_system() -> QubitModel:
    states, effects = [], [GptEffect(np.zeros(4)), GptEffect([1.0, 0, 0, 0])]
    for a in "xyz":
        v = np.array(PAULI_AXES[a])
        for sign in (1, -1):
            states.append(bloch_state(sign * v))
            effects.append(projector_effect(sign * v))
    return QubitModel(
        dim=4,
        state_generators=tuple(states),
        effect_generators=tuple(effects),
        unit=GptEffect([1.0, 0, 0, 0]),
        zero=GptEffect(np.zeros(4)),
        transformations=(GptTransformation(np.eye(4)),),
        instruments=(pauli_instrument("z"),),
    )


def _pauli_states_effects(axes="xyz"):
    states, effects, meas = {}, {}, {}
    for a in axes:
        v = np.array(PAULI_AXES[a])
        states[f"+{a}"] = bloch_state(v)
        states[f"-{a}"] = bloch_state(-v)
        effects[f"+{a}"] = projector_effect(v)
        effects[f"-{a}"] = projector_effect(-v)
        meas[a.upper()] = (f"+{a}", f"-{a}")
    return states, effects, meas


# --- scenario constructors ----------------------------------------------------

def counterexample_scenario(noise: float = 0.25) -> Scenario:
    """Classical bit whose attempted eigenstate preparations are noisy.

    ``s1 = (1-noise) sbar1 + noise sbar2`` and symmetrically for ``s2``; ``phi``
    swaps the two vertices and ``e`` indicates vertex 1.  ``noise = 1/4``
    gives the standard 3/4 : 1/4 mixtures.
    """
    if not 0.0 <= noise <= 0.5:
        raise NoiseOutOfRange(f"noise must lie in [0, 1/2], got {noise}")
    G = make_simplicial(2)
    states = {
        "s1": G.mixture([1 - noise, noise]),
        "s2": G.mixture([noise, 1 - noise]),
        "sbar1": G.vertex(0),
        "sbar2": G.vertex(1),
    }
    effects = {"e": GptEffect([1.0, 0.0]), "not_e": GptEffect([0.0, 1.0])}
    swap = GptTransformation([[0.0, 1.0], [1.0, 0.0]])
    return Scenario(
        name="counterexample",
        system=G,
        named_states=states,
        named_effects=effects,
        named_instruments={"D": G.discriminator},
        named_transforms={"phi": swap},
        ground_truth_class="StrictlyClassical",
        measurements={"M": ("e", "not_e")},
        preparations=("s1", "s2", "sbar1", "sbar2"),
        roles={"phi": "phi", "effect": "e", "controls": ("s1", "s2"), "test": "sbar1"},
        params={"noise": noise},
    )


def hidden_macrostate_scenario() -> Scenario:
    """Three-vertex classical system whose controls only cover two vertices.

    ``phi`` sends vertex 3 to vertex 1 and fixes the others; ``e`` indicates
    vertex 3.  The controls show no disturbance while vertex 3 is fully
    disturbed.
    """
    G = make_simplicial(3)
    phi = GptTransformation([[1.0, 0.0, 1.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]])
    return Scenario(
        name="hidden_macrostate",
        system=G,
        named_states={f"sbar{j + 1}": G.vertex(j) for j in range(3)},
        named_effects={"e": GptEffect([0.0, 0.0, 1.0]), "not_e": GptEffect([1.0, 1.0, 0.0])},
        named_instruments={"D": G.discriminator},
        named_transforms={"phi": phi},
        ground_truth_class="StrictlyClassical",
        measurements={"M": ("e", "not_e")},
        roles={"phi": "phi", "effect": "e", "controls": ("sbar1", "sbar2"), "test": "sbar3"},
    )


def simplicial_scenario(d: int = 2, n_mixtures: int = 0, seed: int = 0) -> Scenario:
    """Vertices (plus optional random mixtures) of a ``d``-simplex, measured by the discriminator."""
    G = make_simplicial(d)
    states = {f"v{j + 1}": G.vertex(j) for j in range(d)}
    rng = np.random.default_rng(seed)
    for i in range(n_mixtures):
        states[f"mix{i}"] = G.mixture(rng.dirichlet(np.ones(d)))
    effects = {f"v{j + 1}": GptEffect(np.eye(d)[j]) for j in range(d)}
    return Scenario(
        name="simplicial",
        system=G,
        named_states=states,
        named_effects=effects,
        named_instruments={"D": G.discriminator},
        ground_truth_class="StrictlyClassical",
        measurements={"D": tuple(effects)},
        params={"d": d, "n_mixtures": n_mixtures, "seed": seed},
    )


def random_classical_scenario(rng: np.random.Generator, d: int | None = None, n_controls: int | None = None) -> Scenario:
    """Random strictly classical scenario for property tests.

    Random stochastic ``phi``, an effect drawn from the hypercube and control
    states drawn as random mixtures of vertices.
    """
    d = int(rng.integers(2, 6)) if d is None else d
    n_controls = d if n_controls is None else n_controls
    G = make_simplicial(d)
    phi = rng.dirichlet(np.ones(d), size=d).T  # column-stochastic
    e = rng.random(d)
    controls = {f"c{i}": G.mixture(rng.dirichlet(np.ones(d) * 0.5)) for i in range(n_controls)}
    return Scenario(
        name="random_classical",
        system=G,
        named_states=controls,
        named_effects={"e": GptEffect(e), "not_e": GptEffect(1 - e)},
        named_transforms={"phi": GptTransformation(phi)},
        named_instruments={"D": G.discriminator},
        ground_truth_class="StrictlyClassical",
        measurements={"M": ("e", "not_e")},
        roles={"phi": "phi", "effect": "e", "controls": tuple(controls)},
    )


def interferometer_scenario() -> Scenario:
    """Two-path interferometer as a qubit: paths are the Z eigenstates.

    ``phi`` is a pi phase shift (rotation about z) and ``e`` is the +X
    outcome of the which-phase measurement.
    """
    Q = qubit_system()
    z, x = np.array(PAULI_AXES["z"]), np.array(PAULI_AXES["x"])
    return Scenario(
        name="interferometer",
        system=Q,
        named_states={"path_L": bloch_state(z), "path_R": bloch_state(-z), "v": bloch_state(x)},
        named_effects={
            "e": projector_effect(x),
            "not_e": projector_effect(-x),
            "which_L": projector_effect(z),
            "which_R": projector_effect(-z),
        },
        named_transforms={"phi": rotation("z", math.pi)},
        ground_truth_class="Quantum",
        measurements={"M": ("e", "not_e"), "W": ("which_L", "which_R")},
        roles={"phi": "phi", "effect": "e", "controls": ("path_L", "path_R"), "test": "v"},
    )


def lg_qubit_scenario(theta: float = math.pi / 3) -> Scenario:
    """Leggett-Garg run: +Z start, rotation by ``theta`` about y between equally spaced times.

    The dichotomic observable is a Z measure-and-reprepare instrument with
    values +1/-1.
    """
    if not math.isfinite(theta):
        raise ValueError("theta must be finite")
    Q = qubit_system()
    z = np.array(PAULI_AXES["z"])
    return Scenario(
        name="lg_qubit",
        system=Q,
        named_states={"init": bloch_state(z)},
        named_effects={"q+": projector_effect(z), "q-": projector_effect(-z)},
        named_instruments={"Q": pauli_instrument("z")},
        named_transforms={"evolve": rotation("y", theta)},
        ground_truth_class="Quantum",
        measurements={"Q": ("q+", "q-")},
        roles={"prep": "init", "evolve": "evolve", "observable": "Q"},
        outcome_values={"Q": {"+": 1.0, "-": -1.0}},
        params={"theta": theta},
    )


def classical_lg_scenario(stochastic, initial) -> Scenario:
    """Classical bit with column-stochastic dynamics and the nondisturbing discriminator."""
    G = make_simplicial(2)
    return Scenario(
        name="classical_lg",
        system=G,
        named_states={"init": G.mixture(initial)},
        named_effects={"q+": GptEffect([1.0, 0.0]), "q-": GptEffect([0.0, 1.0])},
        named_instruments={"Q": G.discriminator},
        named_transforms={"evolve": GptTransformation(stochastic)},
        ground_truth_class="StrictlyClassical",
        measurements={"Q": ("q+", "q-")},
        roles={"prep": "init", "evolve": "evolve", "observable": "Q"},
        outcome_values={"Q": {"1": 1.0, "2": -1.0}},
    )


def nsit_qubit_scenario() -> Scenario:
    """+X start, optional Z measure-and-reprepare, final X measurement."""
    Q = qubit_system()
    x = np.array(PAULI_AXES["x"])
    return Scenario(
        name="nsit_qubit",
        system=Q,
        named_states={"init": bloch_state(x)},
        named_effects={"x+": projector_effect(x), "x-": projector_effect(-x)},
        named_instruments={
            "Z": pauli_instrument("z"),
            "id": Instrument((GptTransformation(np.eye(4), kind="nonincreasing"),), ("0",)),
        },
        ground_truth_class="Quantum",
        measurements={"X": ("x+", "x-")},
        roles={"prep": "init", "intermediate": "Z", "final": "X", "null_outcome": "-"},
    )


def classical_nsit_scenario(initial=(0.5, 0.5)) -> Scenario:
    """Classical bit probed by its discriminator before a final discriminating measurement."""
    G = make_simplicial(2)
    return Scenario(
        name="classical_nsit",
        system=G,
        named_states={"init": G.mixture(initial)},
        named_effects={"v1": GptEffect([1.0, 0.0]), "v2": GptEffect([0.0, 1.0])},
        named_instruments={"D": G.discriminator},
        ground_truth_class="StrictlyClassical",
        measurements={"F": ("v1", "v2")},
        roles={"prep": "init", "intermediate": "D", "final": "F", "null_outcome": "2"},
    )


def qubit_pauli_scenario() -> Scenario:
    """Octahedron of Pauli eigenstates measured in X, Y and Z."""
    states, effects, meas = _pauli_states_effects("xyz")
    return Scenario(
        name="qubit_pauli",
        system=qubit_system(),
        named_states=states,
        named_effects=effects,
        named_instruments={a.upper(): pauli_instrument(a) for a in "xyz"},
        ground_truth_class="Quantum",
        measurements=meas,
    )


def rebit_scenario() -> Scenario:
    """States and sharp effects along +-X and +-Z only (a 3-dimensional fragment)."""
    states, effects, meas = _pauli_states_effects("xz")
    return Scenario(
        name="rebit_xz",
        system=qubit_system(),
        named_states=states,
        named_effects=effects,
        ground_truth_class="Quantum",
        measurements=meas,
    )


def sharp_qubit_scenario(n: int = 20, seed: int = 0) -> Scenario:
    """``n`` random pure qubit states and the sharp two-outcome measurements along the same axes."""
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    states, effects, meas = {}, {}, {}
    for i, m in enumerate(dirs):
        states[f"s{i}"] = bloch_state(m)
        effects[f"e{i}+"] = projector_effect(m)
        effects[f"e{i}-"] = projector_effect(-m)
        meas[f"M{i}"] = (f"e{i}+", f"e{i}-")
    return Scenario(
        name="sharp_qubit",
        system=qubit_system(),
        named_states=states,
        named_effects=effects,
        ground_truth_class="Quantum",
        measurements=meas,
        params={"n": n, "seed": seed},
    )


def depolarize(scenario: Scenario, r: float) -> Scenario:
    """Mix every named state toward the system's maximally mixed state with weight ``r``.

    Subnormalized states are mixed with the maximally mixed state scaled to
    their own normalization.  Effects, maps and instruments are unchanged.
    """
    if not 0.0 <= r <= 1.0:
        raise RateOutOfRange(f"depolarizing rate must lie in [0, 1], got {r}")
    mm = scenario.system.maximally_mixed().vector
    states = {
        k: GptState((1 - r) * s.vector + r * s.normalization * mm, s.normalization)
        for k, s in scenario.named_states.items()
    }
    params = dict(scenario.params)
    params["depolarizing"] = r
    return replace(scenario, named_states=states, params=params)


BUILTIN = {
    "counterexample": counterexample_scenario,
    "hidden_macrostate": hidden_macrostate_scenario,
    "simplicial": simplicial_scenario,
    "interferometer": interferometer_scenario,
    "lg_qubit": lg_qubit_scenario,
    "classical_lg": classical_lg_scenario,
    "nsit_qubit": nsit_qubit_scenario,
    "classical_nsit": classical_nsit_scenario,
    "qubit_pauli": qubit_pauli_scenario,
    "rebit_xz": rebit_scenario,
    "sharp_qubit": sharp_qubit_scenario,
}


def build_scenario(name: str, **params) -> Scenario:
    """Construct a built-in scenario by name, passing ``params`` to its constructor."""
    try:
        ctor = BUILTIN[name]
    except KeyError:
        raise UnknownLabel(f"unknown scenario {name!r}; known: {sorted(BUILTIN)}") from None
    return ctor(**params)
