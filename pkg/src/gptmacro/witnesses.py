"""Operational witnesses of macrorealism violation.

``disturbance`` and ``nondisturbance_witness`` compare how much a map
changes the statistics of test and control states.  ``lg_correlators``
evaluates the three-time Leggett-Garg quantity and ``nsit_delta`` the
no-signaling-in-time distance.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import NullOutcomeProbabilityZero, UnknownLabel, WrongScenarioKind
from .scenarios import Scenario, lg_qubit_scenario
from .simulator import Schedule, cell_generator, exact_distribution, sample_counts

EXACT_THRESHOLD = 1e-9
N_SIGMA = 3.0


@dataclass(frozen=True)
class NullResultSpec:
    """Instrument whose ``null_outcome`` branch is posited not to touch the system."""

    instrument: str
    null_outcome: str

    def validate(self, scenario: Scenario) -> None:
        inst = scenario.instrument(self.instrument)
        if self.null_outcome not in inst.labels:
            raise UnknownLabel(f"instrument {self.instrument!r} has no outcome {self.null_outcome!r}")


@dataclass(frozen=True)
class NondisturbanceReport:
    control_disturbances: Mapping[str, float]
    max_control: float
    test_disturbance: float
    witness_value: float
    fires: bool
    threshold: float
    mode: str = "exact"
    conditioning: str = "none"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["control_disturbances"] = dict(self.control_disturbances)
        return d


@dataclass(frozen=True)
class LgReport:
    C12: float
    C23: float
    C13: float
    K3: float
    violated: bool
    threshold: float = EXACT_THRESHOLD
    mode: str = "exact"

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class NsitReport:
    delta: float
    violated: bool
    threshold: float = EXACT_THRESHOLD
    mode: str = "marginalized"
    with_instrument: Mapping[str, float] = field(default_factory=dict)
    without_instrument: Mapping[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["with_instrument"] = dict(self.with_instrument)
        d["without_instrument"] = dict(self.without_instrument)
        return d


# --- nondisturbance -----------------------------------------------------------


def _disturbing_map(scenario: Scenario, phi: str, conditioning: str):
    """Matrix and normalization rule for ``phi`` (a transformation or an instrument)."""
    if phi in scenario.named_instruments:
        inst = scenario.instrument(phi)
        if conditioning == "null":
            null = scenario.roles.get("null_outcome")
            if null is None:
                raise UnknownLabel(f"scenario {scenario.name!r} defines no null outcome")
            return inst.branch(null).matrix, True
        return inst.total().matrix, False
    return scenario.transform(phi).matrix, False


def _probabilities(scenario: Scenario, state: str, phi: str, effect: str, conditioning: str):
    s = scenario.state(state).vector
    e = scenario.effect(effect).vector
    M, renorm = _disturbing_map(scenario, phi, conditioning)
    t = M @ s
    if renorm:
        norm = float(scenario.system.unit.vector @ t)
        if norm <= 1e-12:
            raise NullOutcomeProbabilityZero(f"null outcome has probability {norm:.3g} on {state!r}")
        t = t * (float(scenario.system.unit.vector @ s) / norm)
    return float(e @ s), float(e @ t)


def disturbance(scenario: Scenario, state: str, phi: str, effect: str, conditioning: str = "none") -> float:
    """``|e . phi(s) - e . s|``."""
    before, after = _probabilities(scenario, state, phi, effect, conditioning)
    return abs(after - before)


def _sampled_disturbance(scenario, state, phi, effect, conditioning, n, seed):
    before, after = _probabilities(scenario, state, phi, effect, conditioning)
    out = []
    for tag, p in (("plain", before), (phi, after)):
        rng = cell_generator(seed, state, f"nd:{tag}:{effect}")
        out.append(rng.binomial(n, min(max(p, 0.0), 1.0)) / n)
    fb, fa = out
    var = max(fb * (1 - fb) / n, 0.25 / n**2) + max(fa * (1 - fa) / n, 0.25 / n**2)
    return abs(fa - fb), var


def nondisturbance_witness(
    scenario: Scenario,
    controls: Sequence[str] | None = None,
    test: str | None = None,
    phi: str | None = None,
    effect: str | None = None,
    n_trials: int | None = None,
    seed: int = 0,
    conditioning: str = "none",
) -> NondisturbanceReport:
    """Compare the test state's disturbance against the largest control disturbance.

    Missing labels are taken from the scenario's roles.  With ``n_trials`` the
    probabilities are estimated from that many shots per cell and the
    threshold is three pooled standard errors.  ``conditioning="null"``
    conditions an instrument ``phi`` on the scenario's null outcome.
    """
    controls = tuple(scenario.role("controls") if controls is None else controls)
    if not controls:
        raise ValueError("at least one control state is required")
    test = scenario.role("test") if test is None else test
    phi = scenario.role("phi") if phi is None else phi
    effect = scenario.role("effect") if effect is None else effect
    if conditioning not in ("none", "null"):
        raise ValueError(f"unknown conditioning {conditioning!r}")
    if n_trials is None:
        d = {c: disturbance(scenario, c, phi, effect, conditioning) for c in controls}
        dv = disturbance(scenario, test, phi, effect, conditioning)
        threshold, mode = EXACT_THRESHOLD, "exact"
        jmax = max(d, key=d.get)
    else:
        est = {c: _sampled_disturbance(scenario, c, phi, effect, conditioning, n_trials, seed) for c in controls}
        d = {c: v[0] for c, v in est.items()}
        dv, var_v = _sampled_disturbance(scenario, test, phi, effect, conditioning, n_trials, seed)
        jmax = max(d, key=d.get)
        threshold = N_SIGMA * math.sqrt(var_v + est[jmax][1])
        mode = "sampled"
    mc = d[jmax]
    w = dv - mc
    return NondisturbanceReport(d, mc, dv, w, bool(w > threshold), threshold, mode, conditioning)


def convexity_bound_check(
    scenario: Scenario,
    controls: Sequence[str] | None = None,
    phi: str | None = None,
    effect: str | None = None,
    n_random: int = 1000,
    seed: int = 0,
    tol: float = EXACT_THRESHOLD,
) -> bool:
    """Whether every random convex mixture of controls is disturbed at most ``max_j d_j``."""
    controls = tuple(scenario.role("controls") if controls is None else controls)
    if not controls:
        raise ValueError("at least one control state is required")
    phi = scenario.role("phi") if phi is None else phi
    effect = scenario.role("effect") if effect is None else effect
    S = np.array([scenario.state(c).vector for c in controls])
    e = scenario.effect(effect).vector
    M, _ = _disturbing_map(scenario, phi, "none")
    gain = S @ M.T @ e - S @ e  # signed disturbance of each control
    dmax = float(np.max(np.abs(gain)))
    alpha = np.random.default_rng(seed).dirichlet(np.ones(len(controls)), size=n_random)
    ds = np.abs(alpha @ gain)
    return bool(np.all(ds <= dmax + tol))


# --- Leggett-Garg ---------------------------------------------------------------


def _lg_schedules(scenario: Scenario) -> dict:
    try:
        prep = scenario.role("prep")
        ev = scenario.role("evolve")
        obs = scenario.role("observable")
        scenario.instrument(obs)
        scenario.transform(ev)
        values = scenario.outcome_values[obs]
    except (UnknownLabel, KeyError):
        raise WrongScenarioKind(f"scenario {scenario.name!r} is not a Leggett-Garg scenario") from None
    return {
        "12": Schedule(prep, obs, (obs, ev)),
        "23": Schedule(prep, obs, (ev, obs, ev)),
        "13": Schedule(prep, obs, (obs, ev, ev)),
    }, values


def _correlator(outcomes, probs, values) -> float:
    return float(sum(p * values[a] * values[b] for (a, b), p in zip(outcomes, probs)))


def lg_correlators(
    scenario: Scenario,
    theta: float | None = None,
    n_trials: int | None = None,
    seed: int = 0,
) -> LgReport:
    """Two-time correlators and ``K3 = C12 + C23 - C13`` at equally spaced times.

    ``theta`` rebuilds a qubit Leggett-Garg scenario at that rotation angle.
    With ``n_trials`` each correlator is estimated from that many runs.
    """
    if theta is not None:
        if scenario.name != "lg_qubit":
            raise WrongScenarioKind("theta only applies to the qubit Leggett-Garg scenario")
        scenario = lg_qubit_scenario(theta)
    schedules, values = _lg_schedules(scenario)
    C = {}
    var = 0.0
    for key, sched in schedules.items():
        if n_trials is None:
            dist = exact_distribution(scenario, sched)
            C[key] = _correlator(dist.outcomes, dist.probs, values)
        else:
            rec = sample_counts(scenario, sched, n_trials, seed, meas_id=f"lg{key}")
            outs = [tuple(oid.split("|")) for (_, _, oid) in rec.counts]
            freqs = [c / n_trials for c in rec.counts.values()]
            C[key] = _correlator(outs, freqs, values)
            var += max(1 - C[key] ** 2, 1.0 / n_trials) / n_trials
    k3 = C["12"] + C["23"] - C["13"]
    if n_trials is None:
        threshold, mode = EXACT_THRESHOLD, "exact"
    else:
        threshold, mode = N_SIGMA * math.sqrt(var), "sampled"
    return LgReport(C["12"], C["23"], C["13"], k3, bool(k3 > 1 + threshold), threshold, mode)


# --- no-signaling in time -----------------------------------------------------


def total_variation(p: Mapping[str, float], q: Mapping[str, float]) -> float:
    """Total variation distance between two distributions given as label -> probability."""
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def _final_distribution(scenario, prep, final, middle=(), null=None):
    dist = exact_distribution(scenario, Schedule(prep, final, middle))
    acc: dict = {}
    for o, p in zip(dist.outcomes, dist.probs):
        if null is not None and o[0] != null:
            continue
        acc[o[-1]] = acc.get(o[-1], 0.0) + float(p)
    total = sum(acc.values())
    if null is not None:
        if total <= 1e-12:
            raise NullOutcomeProbabilityZero(f"null outcome {null!r} never occurs")
        acc = {k: v / total for k, v in acc.items()}
    return acc, total


def _sample(dist: Mapping[str, float], n: int, rng) -> dict:
    keys = list(dist)
    counts = rng.multinomial(n, np.clip([dist[k] for k in keys], 0, None) / sum(dist.values()))
    return {k: float(c) / n for k, c in zip(keys, counts)}


def nsit_delta(
    scenario: Scenario,
    spec: NullResultSpec | str | None = None,
    n_trials: int | None = None,
    seed: int = 0,
) -> NsitReport:
    """Distance between final statistics with and without the intermediate instrument.

    ``spec`` is either an instrument label (outcome marginalized), a
    :class:`NullResultSpec` (condition on the null outcome), or None for the
    scenario's declared intermediate instrument, marginalized.
    """
    prep = scenario.role("prep")
    final = scenario.role("final")
    if spec is None:
        spec = scenario.role("intermediate")
    if isinstance(spec, NullResultSpec):
        spec.validate(scenario)
        inst, null, mode = spec.instrument, spec.null_outcome, "null-conditioned"
    else:
        scenario.instrument(spec)
        inst, null, mode = spec, None, "marginalized"
    p_with, p_null = _final_distribution(scenario, prep, final, (inst,), null)
    p_without, _ = _final_distribution(scenario, prep, final)
    threshold = EXACT_THRESHOLD
    if n_trials is not None:
        n_with = n_trials if null is None else max(1, int(round(n_trials * p_null)))
        p_with = _sample(p_with, n_with, cell_generator(seed, prep, f"nsit:{inst}"))
        p_without = _sample(p_without, n_trials, cell_generator(seed, prep, "nsit:none"))
        var = sum(p_with[k] * (1 - p_with[k]) / n_with for k in p_with)
        var += sum(p_without[k] * (1 - p_without[k]) / n_trials for k in p_without)
        threshold = N_SIGMA * math.sqrt(max(var, 1.0 / n_trials**2))
        mode += "-sampled"
    delta = float(min(1.0, total_variation(p_with, p_without)))
    return NsitReport(delta, bool(delta > threshold), threshold, mode, p_with, p_without)
