"""Command-line entry point.

Subcommands
-----------
simulate             counts CSV (plus ``.meta.json``) from a config
analyze              tomography, embedding tests and classification of a counts CSV
witness              Leggett-Garg, NSIT, nondisturbance and convexity checks
demo-counterexample  noisy-control counterexample end to end

Exit codes: 0 ok, 2 bad config, 3 unknown scenario or label, 4 malformed
counts, 5 tomography did not converge (a partial report is still written).
Diagnostics go to standard error; results go to files under ``--out``.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import ConfigError, RunConfig, load_config, resolve_scenario, run_plan
from .embedding import classification_label, classify, robustness_depolarizing
from .errors import ConvergenceFailure, DimensionTooLarge, GptError, UnknownLabel, WrongScenarioKind
from .scenarios import Scenario, counterexample_scenario
from .simulator import CountsRecord, frequency_matrix, scenario_measurements, simulate
from .tomography import reconstruct
from .witnesses import (
    NullResultSpec,
    convexity_bound_check,
    disturbance,
    lg_correlators,
    nondisturbance_witness,
    nsit_delta,
)

log = logging.getLogger("gptmacro")

EXIT_OK, EXIT_CONFIG, EXIT_LABEL, EXIT_COUNTS, EXIT_CONVERGENCE = 0, 2, 3, 4, 5


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_default) + "\n")
    log.info("wrote %s", path)


def _default(obj):
    if hasattr(obj, "tolist"):
        return obj.tolist()
    if hasattr(obj, "item"):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _flatten(doc, prefix=""):
    """Scalar leaves of a nested report as (dotted key, value) pairs."""
    if isinstance(doc, dict):
        for k, v in doc.items():
            if k in ("certificate", "rank_scan"):
                continue
            yield from _flatten(v, f"{prefix}{k}.")
    elif not isinstance(doc, list):
        yield prefix[:-1], doc


def _write_summary(path: Path, doc: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("key", "value"))
        for k, v in _flatten(doc):
            w.writerow((k, v))
    log.info("wrote %s", path)


def _config(args) -> RunConfig:
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
    except ConfigError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.exact:
        changes["trials"] = None
    if args.out is not None:
        changes["out"] = args.out
    if args.workers is not None:
        changes["workers"] = args.workers
    try:
        return replace(cfg, **changes) if changes else cfg
    except ConfigError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None


def _scenario(cfg: RunConfig) -> Scenario:
    try:
        return resolve_scenario(cfg.scenario)
    except UnknownLabel as exc:
        raise CliError(EXIT_LABEL, str(exc.args[0])) from None
    except (TypeError, ValueError) as exc:
        raise CliError(EXIT_CONFIG, f"cannot build scenario: {exc}") from None


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _scenario_echo(cfg: RunConfig, scenario: Scenario) -> dict:
    return {"name": scenario.name, "config": cfg.scenario, "ground_truth_class": scenario.ground_truth_class}


# --- simulate -----------------------------------------------------------------


def _simulate(cfg: RunConfig, scenario: Scenario) -> CountsRecord:
    preps, meas = run_plan(cfg, scenario)
    try:
        return simulate(scenario, preps, meas, n_per_cell=cfg.trials, seed=cfg.seed, workers=cfg.workers)
    except UnknownLabel as exc:
        raise CliError(EXIT_LABEL, str(exc.args[0])) from None


def cmd_simulate(args) -> int:
    cfg = _config(args)
    scenario = _scenario(cfg)
    rec = _simulate(cfg, scenario)
    out = _outdir(cfg)
    rec.to_csv(out / "counts.csv")
    log.info("wrote %s", out / "counts.csv")
    if args.csv_summary:
        with open(out / "frequencies.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("prep_id", "meas_id", "outcome_id", "frequency"))
            for p, m, o in rec.counts:
                w.writerow((p, m, o, format(rec.frequency(p, m, o), ".17g")))
    return EXIT_OK


# --- analyze ------------------------------------------------------------------


def _read_counts(path) -> CountsRecord:
    try:
        return CountsRecord.from_csv(path)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(EXIT_COUNTS, f"malformed counts {path}: {exc}") from None


def analyze_record(rec: CountsRecord, cfg: RunConfig) -> tuple[dict, object, bool]:
    """Tomography, embedding and classification; returns (report, realized, converged)."""
    try:
        fm = frequency_matrix(rec)
    except (ValueError, KeyError) as exc:
        raise CliError(EXIT_COUNTS, f"counts cannot form a data matrix: {exc}") from None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        realized = reconstruct(fm, k_max=cfg.k_max, threshold=cfg.threshold)
    for w in caught:
        log.warning("%s", w.message)
    converged = not any(issubclass(w.category, ConvergenceFailure) for w in caught)
    fit = realized.fit
    report = {
        "counts": {
            "n_cells": len(rec.trials),
            "exact": rec.exact,
            "total_trials": int(sum(rec.trials.values())),
            "seed": rec.seed,
        },
        "realized_gpt": {
            "k": realized.k,
            "chi2": fit.chi2,
            "chi2_per_dof": fit.chi2_per_dof,
            "dof": fit.dof,
            "residual_max": fit.residual_max,
            "converged": fit.converged and converged,
            "rank_warning": fit.rank_warning,
            "rank_scan": [list(r) for r in fit.rank_scan],
        },
    }
    if not converged:
        report["status"] = "convergence-failure"
        return report, realized, False
    try:
        c = classify(realized, tol_embed=cfg.tol_embed, budget=cfg.budget)
    except DimensionTooLarge as exc:
        report["embedding"] = {"skipped": str(exc)}
        report["classification"] = "Undetermined"
        return report, realized, True
    report["embedding"] = {
        "noncontextuality": c.noncontextuality.to_dict(),
        "strict_classicality": c.strict_classicality.to_dict(),
    }
    report["classification"] = c.label
    assert c.label == classification_label(c.noncontextuality.verdict, c.strict_classicality.verdict)
    if cfg.robustness:
        report["robustness"] = {
            t: robustness_depolarizing(realized, t, cfg.tol_embed) for t in ("noncontextuality", "strict_classicality")
        }
    return report, realized, True


def _header(cfg: RunConfig) -> dict:
    return {"tool": "gptmacro", "version": __version__, "config_hash": cfg.config_hash()}


def cmd_analyze(args) -> int:
    cfg = _config(args)
    if not args.counts:
        raise CliError(EXIT_CONFIG, "analyze needs --counts")
    rec = _read_counts(args.counts)
    out = _outdir(cfg)
    report, realized, ok = analyze_record(rec, cfg)
    report = {**_header(cfg), "scenario": {"name": rec.scenario_name, "config": cfg.scenario}, **report}
    realized.to_csv(out / "realized_gpt.csv")
    _write_json(out / "report.json", report)
    if args.csv_summary:
        _write_summary(out / "summary.csv", report)
    return EXIT_OK if ok else EXIT_CONVERGENCE


# --- witness ------------------------------------------------------------------


def _default_witnesses(scenario: Scenario) -> list:
    kinds = []
    if "controls" in scenario.roles:
        kinds += [("nondisturbance", {}), ("convexity-check", {})]
    if "observable" in scenario.roles:
        kinds.append(("lg", {}))
    if "intermediate" in scenario.roles:
        kinds.append(("nsit", {}))
    return kinds


def run_witness(kind: str, opts: dict, scenario: Scenario, cfg: RunConfig) -> dict:
    opts = dict(opts)
    n = opts.pop("n_trials", cfg.trials)
    seed = opts.pop("seed", cfg.seed if cfg.seed is not None else 0)
    if kind == "nondisturbance":
        return nondisturbance_witness(scenario, n_trials=n, seed=seed, **opts).to_dict()
    if kind == "convexity-check":
        return {"holds": convexity_bound_check(scenario, seed=seed, **opts)}
    if kind == "lg":
        return lg_correlators(scenario, n_trials=n, seed=seed, **opts).to_dict()
    if kind == "nsit":
        spec = opts.pop("instrument", None)
        null = opts.pop("null_outcome", None)
        if null is not None:
            spec = NullResultSpec(spec or scenario.role("intermediate"), str(null))
        return nsit_delta(scenario, spec, n_trials=n, seed=seed, **opts).to_dict()
    raise CliError(EXIT_CONFIG, f"unknown witness {kind!r}")


def cmd_witness(args) -> int:
    cfg = _config(args)
    scenario = _scenario(cfg)
    todo = [(w.kind, w.options) for w in cfg.witnesses] or _default_witnesses(scenario)
    results = []
    for kind, opts in todo:
        try:
            results.append({"kind": kind, "result": run_witness(kind, opts, scenario, cfg)})
        except (UnknownLabel, WrongScenarioKind) as exc:
            raise CliError(EXIT_LABEL, f"{kind}: {exc.args[0]}") from None
        except TypeError as exc:
            raise CliError(EXIT_CONFIG, f"{kind}: {exc}") from None
    report = {**_header(cfg), "scenario": _scenario_echo(cfg, scenario), "witnesses": results}
    out = _outdir(cfg)
    _write_json(out / "witness_report.json", report)
    if args.csv_summary:
        flat = {f"{i}.{r['kind']}": r["result"] for i, r in enumerate(results)}
        _write_summary(out / "witness_summary.csv", flat)
    return EXIT_OK


# --- demo ---------------------------------------------------------------------


def cmd_demo(args) -> int:
    cfg = _config(args)
    noise = 0.25
    if isinstance(cfg.scenario, dict) and cfg.scenario.get("name") == "counterexample":
        noise = float((cfg.scenario.get("params") or {}).get("noise", noise))
    scenario = counterexample_scenario(noise)
    cfg = replace(cfg, scenario={"name": "counterexample", "params": {"noise": noise}})
    d = {s: disturbance(scenario, s, "phi", "e") for s in ("sbar1", "sbar2", "s1", "s2")}
    noisy = nondisturbance_witness(scenario, controls=("s1", "s2"), test="sbar1")
    clean = nondisturbance_witness(scenario, controls=("sbar1", "sbar2"), test="s1")
    bound = convexity_bound_check(scenario, controls=("sbar1", "sbar2"), seed=cfg.seed or 0)
    rec = simulate(scenario, scenario.preparations, scenario_measurements(scenario), n_per_cell=cfg.trials, seed=cfg.seed)
    analysis, realized, ok = analyze_record(rec, cfg)
    report = {
        **_header(cfg),
        "scenario": _scenario_echo(cfg, scenario),
        "disturbances": d,
        "witness_noisy_controls": noisy.to_dict(),
        "witness_vertex_controls": clean.to_dict(),
        "convexity_bound_holds": bound,
        "analysis": analysis,
    }
    out = _outdir(cfg)
    rec.to_csv(out / "counts.csv")
    realized.to_csv(out / "realized_gpt.csv")
    _write_json(out / "demo_report.json", report)
    if args.csv_summary:
        _write_summary(out / "demo_summary.csv", report)
    log.info(
        "witness fires: %s; classification: %s",
        noisy.fires,
        analysis.get("classification"),
    )
    return EXIT_OK if ok else EXIT_CONVERGENCE


# --- entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--counts", help="counts CSV (analyze)")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--seed", type=int, help="RNG seed (overrides the config)")
    common.add_argument("--exact", action="store_true", help="use exact probabilities instead of sampling")
    common.add_argument("--csv-summary", action="store_true", help="also write flat CSV tables")
    common.add_argument("--workers", type=int, help="simulation worker threads")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="gptmacro", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"gptmacro {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in (("simulate", cmd_simulate), ("analyze", cmd_analyze), ("witness", cmd_witness), ("demo-counterexample", cmd_demo)):
        sp = sub.add_parser(name, parents=[common])
        sp.set_defaults(func=fn)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr, format="%(levelname)s: %(message)s")
    if args.seed is not None and args.seed < 0:
        log.error("seed must be a nonnegative integer")
        return EXIT_CONFIG
    try:
        return args.func(args)
    except CliError as exc:
        log.error("%s", exc)
        return exc.code
    except GptError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
