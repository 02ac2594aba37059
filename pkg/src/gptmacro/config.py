"""Run configuration documents (YAML) and inline scenario definitions.

A minimal document::

    schema: 1
    scenario: counterexample
    trials: 100000
    seed: 7

``scenario`` is a built-in name, ``{name: ..., params: {...}}``, or
``{inline: {...}}`` with explicit vectors (see :func:`scenario_from_dict`).
Unknown keys anywhere in the document are errors.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .core import GptEffect, GptState, GptSystem, GptTransformation, Instrument
from .scenarios import Scenario, build_scenario
from .simulator import Measurement, scenario_measurements

SCHEMA_VERSION = 1
WITNESS_KINDS = ("nondisturbance", "convexity-check", "lg", "nsit")


class ConfigError(ValueError):
    """The configuration document is malformed."""


@dataclass(frozen=True)
class WitnessSpec:
    kind: str
    options: dict = field(default_factory=dict)


@dataclass(frozen=True)
class RunConfig:
    scenario: object = "counterexample"
    preparations: tuple = ()
    schedules: tuple = ()
    trials: int | None = None
    seed: int | None = None
    workers: int = 1
    k_max: int | None = None
    threshold: float | None = None
    tol_embed: float = 1e-6
    budget: int = 20
    robustness: bool = False
    witnesses: tuple = ()
    out: str = "out"

    def __post_init__(self):
        if self.trials is not None and self.seed is None:
            raise ConfigError("a seed is required when trials are finite")
        if self.trials is not None and self.trials < 1:
            raise ConfigError("trials must be a positive integer")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["witnesses"] = [{"kind": w.kind, **w.options} for w in self.witnesses]
        d["schedules"] = [asdict(m) for m in self.schedules]
        return d

    def config_hash(self) -> str:
        """Digest of the settings that affect results (output dir and worker count excluded)."""
        d = {k: v for k, v in self.to_dict().items() if k not in ("out", "workers")}
        doc = json.dumps(d, sort_keys=True, default=str)
        return hashlib.sha256(doc.encode("utf8")).hexdigest()


_TOP = {"schema", "scenario", "preparations", "schedules", "trials", "seed", "workers", "tomography", "embedding", "witnesses", "out"}
_TOMO = {"k_max", "threshold"}
_EMBED = {"tol_embed", "budget", "robustness"}
_SCHED = {"id", "final", "middle"}
_INLINE = {"name", "dim", "unit", "states", "effects", "transforms", "instruments", "measurements", "preparations", "roles", "outcome_values", "ground_truth_class"}


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be a mapping")
    extra = set(d) - allowed
    if extra:
        raise ConfigError(f"unknown keys in {where}: {sorted(extra)}")


def _int_or_none(v, name):
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{name} must be an integer")
    return v


def parse_config(doc: dict) -> RunConfig:
    """Validate a parsed document and build a :class:`RunConfig`."""
    _check_keys(doc, _TOP, "config")
    if doc.get("schema") != SCHEMA_VERSION:
        raise ConfigError(f"schema must be {SCHEMA_VERSION}, got {doc.get('schema')!r}")
    tomo = doc.get("tomography") or {}
    emb = doc.get("embedding") or {}
    _check_keys(tomo, _TOMO, "tomography")
    _check_keys(emb, _EMBED, "embedding")
    scheds = []
    for i, s in enumerate(doc.get("schedules") or []):
        _check_keys(s, _SCHED, f"schedules[{i}]")
        if "id" not in s or "final" not in s:
            raise ConfigError(f"schedules[{i}] needs 'id' and 'final'")
        scheds.append(Measurement(str(s["id"]), s["final"], tuple(s.get("middle") or ())))
    wits = []
    for i, w in enumerate(doc.get("witnesses") or []):
        if isinstance(w, str):
            w = {"kind": w}
        if not isinstance(w, dict) or "kind" not in w:
            raise ConfigError(f"witnesses[{i}] needs a 'kind'")
        if w["kind"] not in WITNESS_KINDS:
            raise ConfigError(f"witnesses[{i}]: unknown kind {w['kind']!r}")
        wits.append(WitnessSpec(w["kind"], {k: v for k, v in w.items() if k != "kind"}))
    sc = doc.get("scenario", "counterexample")
    if isinstance(sc, dict):
        _check_keys(sc, {"name", "params", "inline"}, "scenario")
        if "inline" in sc:
            _check_keys(sc["inline"], _INLINE, "scenario.inline")
    elif not isinstance(sc, str):
        raise ConfigError("scenario must be a name or a mapping")
    try:
        return RunConfig(
            scenario=sc,
            preparations=tuple(doc.get("preparations") or ()),
            schedules=tuple(scheds),
            trials=_int_or_none(doc.get("trials"), "trials"),
            seed=_int_or_none(doc.get("seed"), "seed"),
            workers=_int_or_none(doc.get("workers", 1), "workers"),
            k_max=_int_or_none(tomo.get("k_max"), "k_max"),
            threshold=None if tomo.get("threshold") is None else float(tomo["threshold"]),
            tol_embed=float(emb.get("tol_embed", 1e-6)),
            budget=int(emb.get("budget", 20)),
            robustness=bool(emb.get("robustness", False)),
            witnesses=tuple(wits),
            out=str(doc.get("out", "out")),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path) -> RunConfig:
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if doc is None:
        raise ConfigError(f"config {path} is empty")
    return parse_config(doc)


def scenario_from_dict(d: dict) -> Scenario:
    """Build a scenario from explicit vectors.

    Keys: ``dim``, ``unit``, ``states`` (label -> vector), ``effects``
    (label -> vector), ``transforms`` (label -> matrix), ``instruments``
    (label -> {outcome -> matrix}), ``measurements`` (id -> effect labels),
    and optionally ``preparations``, ``roles``, ``outcome_values``, ``name``
    and ``ground_truth_class``.
    """
    _check_keys(d, _INLINE, "scenario.inline")
    try:
        dim = int(d["dim"])
        unit = GptEffect(d["unit"])
        states = {str(k): GptState(v, float(np.dot(unit.vector, v))) for k, v in d["states"].items()}
    except KeyError as exc:
        raise ConfigError(f"inline scenario needs {exc.args[0]!r}") from None
    effects = {str(k): GptEffect(v) for k, v in (d.get("effects") or {}).items()}
    transforms = {str(k): GptTransformation(v) for k, v in (d.get("transforms") or {}).items()}
    instruments = {
        str(k): Instrument(tuple(GptTransformation(m, kind="nonincreasing") for m in br.values()), tuple(br))
        for k, br in (d.get("instruments") or {}).items()
    }
    system = GptSystem(
        dim=dim,
        state_generators=tuple(states.values()),
        effect_generators=tuple(effects.values()),
        unit=unit,
        zero=GptEffect(np.zeros(dim)),
        transformations=tuple(transforms.values()),
        instruments=tuple(instruments.values()),
        raw_fragment=True,
    )
    return Scenario(
        name=str(d.get("name", "inline")),
        system=system,
        named_states=states,
        named_effects=effects,
        named_instruments=instruments,
        named_transforms=transforms,
        ground_truth_class=d.get("ground_truth_class", "Other"),
        measurements={str(k): tuple(v) for k, v in (d.get("measurements") or {}).items()},
        preparations=tuple(d.get("preparations") or ()),
        roles=dict(d.get("roles") or {}),
        outcome_values={k: dict(v) for k, v in (d.get("outcome_values") or {}).items()},
    )


def resolve_scenario(spec) -> Scenario:
    """Scenario from a config entry; unknown names raise ``UnknownLabel``."""
    if isinstance(spec, str):
        return build_scenario(spec)
    if "inline" in spec:
        return scenario_from_dict(spec["inline"])
    return build_scenario(spec["name"], **(spec.get("params") or {}))


def run_plan(cfg: RunConfig, scenario: Scenario):
    """Preparations and measurements to simulate."""
    preps = cfg.preparations or scenario.preparations
    meas = list(cfg.schedules) or scenario_measurements(scenario)
    return tuple(preps), meas
