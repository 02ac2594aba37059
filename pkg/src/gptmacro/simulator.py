"""Exact outcome distributions and seeded finite-sample counts.

A schedule is ``prepare -> (transform | instrument | skip)* -> measure``.
Outcome tuples list the branch label of every intermediate instrument
followed by the final outcome label.

Sampling uses a Philox counter-based generator whose key is derived from
``(seed, prep_id, meas_id)``; trial ``i`` of a cell consumes the ``i``-th
uniform of that stream.  Counts therefore do not depend on the order in which
cells are simulated or on how many workers are used.
"""
from __future__ import annotations

import csv
import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import ABS_TOL
from .errors import InvalidMeasurement, ProbabilityOutOfRange, UnknownLabel
from .scenarios import Scenario

NEGATIVITY_TOL = 1e-12
SAMPLE_CHUNK = 1 << 20
CSV_HEADER = ("prep_id", "meas_id", "outcome_id", "count")
OUTCOME_SEP = "|"


@dataclass(frozen=True)
class Measurement:
    """A measurement procedure: optional intermediate steps, then a final measurement.

    ``final`` is a tuple of effect labels, the label of a scenario
    measurement, or an instrument label (measured destructively by composing
    each branch with the unit effect).
    """

    id: str
    final: object
    middle: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "middle", tuple(self.middle))
        if not isinstance(self.final, str):
            object.__setattr__(self, "final", tuple(self.final))


@dataclass(frozen=True)
class Schedule:
    prep: str
    final: object
    middle: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "middle", tuple(self.middle))
        if not isinstance(self.final, str):
            object.__setattr__(self, "final", tuple(self.final))

    @classmethod
    def of(cls, prep: str, measurement: Measurement) -> "Schedule":
        return cls(prep, measurement.final, measurement.middle)


@dataclass(frozen=True)
class OutcomeDistribution:
    outcomes: tuple
    probs: np.ndarray

    def as_dict(self) -> dict:
        return dict(zip(self.outcomes, self.probs.tolist()))

    def __getitem__(self, outcome) -> float:
        if isinstance(outcome, str):
            outcome = (outcome,)
        return float(self.probs[self.outcomes.index(tuple(outcome))])

    def marginal(self, position: int) -> "OutcomeDistribution":
        """Distribution of the outcome at ``position`` (use -1 for the final measurement)."""
        acc: dict = {}
        for o, p in zip(self.outcomes, self.probs):
            key = (o[position],)
            acc[key] = acc.get(key, 0.0) + float(p)
        return OutcomeDistribution(tuple(acc), np.array(list(acc.values())))


def outcome_id(outcome: tuple) -> str:
    return OUTCOME_SEP.join(outcome)


def _final_effects(scenario: Scenario, final) -> list:
    if isinstance(final, str):
        if final in scenario.named_instruments:
            inst = scenario.named_instruments[final]
            u = scenario.system.unit.vector
            return [(lab, br.matrix.T @ u) for lab, br in zip(inst.labels, inst.branches)]
        if final in scenario.measurements:
            final = scenario.measurements[final]
        else:
            raise UnknownLabel(f"{final!r} is neither an instrument nor a measurement of {scenario.name!r}")
    return [(lab, scenario.effect(lab).vector) for lab in final]


def _resolve_step(scenario: Scenario, label):
    if label is None or label == "skip":
        return None
    in_t = label in scenario.named_transforms or label == "identity"
    in_i = label in scenario.named_instruments
    if in_t and in_i:
        raise UnknownLabel(f"label {label!r} names both a transformation and an instrument")
    if in_t:
        return scenario.transform(label)
    if in_i:
        return scenario.instrument(label)
    raise UnknownLabel(f"scenario {scenario.name!r} has no transformation or instrument {label!r}")


def exact_distribution(scenario: Scenario, schedule: Schedule, tol: float = ABS_TOL) -> OutcomeDistribution:
    """Exact joint distribution over (intermediate outcomes..., final outcome)."""
    s = scenario.state(schedule.prep)
    branches = [((), s.vector)]
    for label in schedule.middle:
        step = _resolve_step(scenario, label)
        if step is None:
            continue
        if hasattr(step, "branches"):
            branches = [
                (out + (lab,), br.matrix @ v)
                for out, v in branches
                for lab, br in zip(step.labels, step.branches)
            ]
        else:
            branches = [(out, step.matrix @ v) for out, v in branches]
    effects = _final_effects(scenario, schedule.final)
    total = sum(v for _, v in effects)
    gap = float(np.max(np.abs(total - scenario.system.unit.vector)))
    if gap > tol:
        raise InvalidMeasurement(f"final effects miss the unit effect by {gap:.3g}")
    outcomes, probs = [], []
    for out, v in branches:
        for lab, e in effects:
            outcomes.append(out + (lab,))
            probs.append(float(e @ v))
    p = np.array(probs)
    if p.min(initial=0.0) < -NEGATIVITY_TOL:
        raise ProbabilityOutOfRange(f"negative probability {p.min():.3g} in schedule {schedule}")
    p = np.clip(p, 0.0, None)
    norm = p.sum()
    if abs(norm - 1.0) > tol:
        raise ProbabilityOutOfRange(f"outcome probabilities sum to {norm!r}")
    return OutcomeDistribution(tuple(outcomes), p / norm)


# --- sampling -----------------------------------------------------------------

def cell_generator(seed: int, prep_id: str, meas_id: str) -> np.random.Generator:
    """Counter-based generator for one (prep, measurement) cell."""
    h = hashlib.blake2b(digest_size=16)
    h.update(int(seed).to_bytes(8, "little", signed=False))
    h.update(prep_id.encode("utf8") + b"\x1f" + meas_id.encode("utf8"))
    key = np.frombuffer(h.digest(), dtype="<u8")
    return np.random.Generator(np.random.Philox(key=key))


def _draw_counts(probs: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    counts = np.zeros(len(probs), dtype=np.int64)
    left = n
    while left > 0:
        m = min(left, SAMPLE_CHUNK)
        idx = np.searchsorted(cdf, rng.random(m), side="right")
        counts += np.bincount(np.minimum(idx, len(probs) - 1), minlength=len(probs))
        left -= m
    return counts


@dataclass
class CountsRecord:
    """Outcome counts per (prep, measurement) cell.

    ``trials`` of 0 marks exact mode: ``counts`` then holds exact
    frequencies rather than integers.
    """

    counts: dict = field(default_factory=dict)
    trials: dict = field(default_factory=dict)
    seed: int | None = None
    scenario_name: str = ""

    @property
    def exact(self) -> bool:
        return bool(self.trials) and all(n == 0 for n in self.trials.values())

    def cells(self) -> list:
        return list(self.trials)

    def outcomes(self, prep_id: str, meas_id: str) -> list:
        return [o for (p, m, o) in self.counts if p == prep_id and m == meas_id]

    def frequency(self, prep_id: str, meas_id: str, outcome: str) -> float:
        n = self.trials[(prep_id, meas_id)]
        c = self.counts[(prep_id, meas_id, outcome)]
        return float(c) if n == 0 else c / n

    def update(self, other: "CountsRecord") -> None:
        self.counts.update(other.counts)
        self.trials.update(other.trials)

    def check(self) -> None:
        """Raise ``ValueError`` unless every cell's counts add up to its trials."""
        sums: dict = {}
        for (p, m, _), c in self.counts.items():
            if (p, m) not in self.trials:
                raise ValueError(f"cell {(p, m)} has counts but no trial total")
            if c < 0:
                raise ValueError(f"negative count in cell {(p, m)}")
            sums[(p, m)] = sums.get((p, m), 0) + c
        for cell, n in self.trials.items():
            target = 1.0 if n == 0 else n
            if abs(sums.get(cell, 0) - target) > (1e-9 if n == 0 else 0):
                raise ValueError(f"counts in cell {cell} sum to {sums.get(cell, 0)}, expected {target}")

    # --- serialization ---
    def to_csv(self, path) -> Path:
        """Write the counts CSV and its ``.meta.json`` sidecar; return the sidecar path."""
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for (p, m, o), c in self.counts.items():
                w.writerow((p, m, o, _fmt_count(c)))
        meta = metadata_path(path)
        doc = {
            "format": "gptmacro-counts",
            "version": 1,
            "scenario": self.scenario_name,
            "seed": self.seed,
            "exact": self.exact,
            "trials": [{"prep_id": p, "meas_id": m, "trials": int(n)} for (p, m), n in self.trials.items()],
        }
        meta.write_text(json.dumps(doc, indent=2) + "\n")
        return meta

    @classmethod
    def from_csv(cls, path, meta=None) -> "CountsRecord":
        """Read a counts CSV; the sidecar is used when present.

        Without a sidecar, cells whose counts are all integers get trials equal
        to their sum and other cells are read as exact frequencies.
        """
        path = Path(path)
        counts: dict = {}
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or tuple(rows[0]) != CSV_HEADER:
            raise ValueError(f"{path}: expected header {','.join(CSV_HEADER)}")
        if len(rows) < 2:
            raise ValueError(f"{path}: no data rows")
        for lineno, row in enumerate(rows[1:], start=2):
            if len(row) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            p, m, o, c = row
            if (p, m, o) in counts:
                raise ValueError(f"{path}:{lineno}: duplicate row for {(p, m, o)}")
            counts[(p, m, o)] = _parse_count(c, path, lineno)
        meta = metadata_path(path) if meta is None else Path(meta)
        rec = cls(counts=counts)
        if meta.exists():
            doc = json.loads(meta.read_text())
            rec.seed = doc.get("seed")
            rec.scenario_name = doc.get("scenario", "")
            rec.trials = {(t["prep_id"], t["meas_id"]): int(t["trials"]) for t in doc["trials"]}
        else:
            sums: dict = {}
            ints: dict = {}
            for (p, m, _), c in counts.items():
                sums[(p, m)] = sums.get((p, m), 0) + c
                ints[(p, m)] = ints.get((p, m), True) and isinstance(c, int)
            rec.trials = {cell: (int(s) if ints[cell] else 0) for cell, s in sums.items()}
        rec.check()
        return rec


def metadata_path(csv_path) -> Path:
    p = Path(csv_path)
    return p.with_name(p.stem + ".meta.json")


def _fmt_count(c) -> str:
    if isinstance(c, (int, np.integer)):
        return str(int(c))
    return format(float(c), ".17g")


def _parse_count(text: str, path, lineno):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        v = float(text)
    except ValueError:
        raise ValueError(f"{path}:{lineno}: count {text!r} is not a number") from None
    if not np.isfinite(v):
        raise ValueError(f"{path}:{lineno}: count {text!r} is not finite")
    return v


def sample_counts(
    scenario: Scenario,
    schedule: Schedule,
    n: int,
    seed: int,
    meas_id: str | None = None,
) -> CountsRecord:
    """Draw ``n`` independent outcomes of ``schedule``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    meas_id = _default_meas_id(schedule) if meas_id is None else meas_id
    dist = exact_distribution(scenario, schedule)
    rng = cell_generator(seed, schedule.prep, meas_id)
    k = _draw_counts(dist.probs, n, rng)
    rec = CountsRecord(seed=seed, scenario_name=scenario.name)
    for o, c in zip(dist.outcomes, k):
        rec.counts[(schedule.prep, meas_id, outcome_id(o))] = int(c)
    rec.trials[(schedule.prep, meas_id)] = n
    return rec


def exact_counts(scenario: Scenario, schedule: Schedule, meas_id: str | None = None) -> CountsRecord:
    """Exact-mode record: frequencies are the exact probabilities, trials are 0."""
    meas_id = _default_meas_id(schedule) if meas_id is None else meas_id
    dist = exact_distribution(scenario, schedule)
    rec = CountsRecord(seed=None, scenario_name=scenario.name)
    for o, p in zip(dist.outcomes, dist.probs):
        rec.counts[(schedule.prep, meas_id, outcome_id(o))] = float(p)
    rec.trials[(schedule.prep, meas_id)] = 0
    return rec


def _default_meas_id(schedule: Schedule) -> str:
    final = schedule.final if isinstance(schedule.final, str) else "+".join(schedule.final)
    return "/".join([*(str(x) for x in schedule.middle), final])


def simulate(
    scenario: Scenario,
    preps: Sequence[str],
    measurements: Sequence[Measurement],
    n_per_cell: int | None = None,
    seed: int | None = 0,
    workers: int = 1,
) -> CountsRecord:
    """Counts for every (prep, measurement) cell; exact mode when ``n_per_cell`` is None."""
    if not preps or not measurements:
        raise ValueError("need at least one preparation and one measurement")
    if n_per_cell is not None and seed is None:
        raise ValueError("a seed is required for finite sampling")
    cells = [(p, m) for p in preps for m in measurements]

    def run(cell):
        p, m = cell
        sched = Schedule.of(p, m)
        if n_per_cell is None:
            return exact_counts(scenario, sched, meas_id=m.id)
        return sample_counts(scenario, sched, n_per_cell, seed, meas_id=m.id)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, cells))
    else:
        parts = [run(c) for c in cells]
    rec = CountsRecord(seed=None if n_per_cell is None else seed, scenario_name=scenario.name)
    for part in parts:
        rec.update(part)
    return rec


@dataclass(frozen=True)
class FrequencyMatrix:
    """Rows are preparations; column 0 is the synthesized unit effect.

    ``trials[i, j]`` is the number of shots behind ``F[i, j]`` (0 in exact
    mode and for the unit column of exact data).
    """

    F: np.ndarray
    trials: np.ndarray
    row_ids: tuple
    col_ids: tuple

    @property
    def exact(self) -> bool:
        return bool(np.all(self.trials == 0))


def frequency_matrix(record: CountsRecord, preps: Sequence[str] | None = None) -> FrequencyMatrix:
    """Assemble the frequency matrix of a complete counts record."""
    rows = list(dict.fromkeys(p for p, _ in record.trials)) if preps is None else list(preps)
    metas = list(dict.fromkeys(m for _, m in record.trials))
    cols = [("u", "u")]
    for m in metas:
        seen = dict.fromkeys(o for (p, mm, o) in record.counts if mm == m)
        cols.extend((m, o) for o in seen)
    F = np.zeros((len(rows), len(cols)))
    N = np.zeros((len(rows), len(cols)), dtype=np.int64)
    F[:, 0] = 1.0
    for i, p in enumerate(rows):
        n_row = []
        for m in metas:
            if (p, m) not in record.trials:
                raise ValueError(f"missing cell ({p}, {m}) in counts record")
            n_row.append(record.trials[(p, m)])
        N[i, 0] = max(n_row)
        for j, (m, o) in enumerate(cols[1:], start=1):
            n = record.trials[(p, m)]
            N[i, j] = n
            c = record.counts.get((p, m, o), 0)
            F[i, j] = float(c) if n == 0 else c / n
    return FrequencyMatrix(F, N, tuple(rows), tuple(cols))


def build_data_matrix(
    scenario: Scenario,
    preps: Sequence[str],
    measurements: Sequence[Measurement],
    n_per_cell: int | None = None,
    seed: int | None = 0,
    workers: int = 1,
):
    """Simulate every cell and return ``(CountsRecord, FrequencyMatrix)``."""
    rec = simulate(scenario, preps, measurements, n_per_cell=n_per_cell, seed=seed, workers=workers)
    return rec, frequency_matrix(rec, preps)


def scenario_measurements(scenario: Scenario) -> list:
    """The scenario's destructive measurements as :class:`Measurement` objects."""
    return [Measurement(mid, tuple(effects)) for mid, effects in scenario.measurements.items()]
