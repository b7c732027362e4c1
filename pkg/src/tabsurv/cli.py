"""Command-line entry point: train, eval, simulate, benchmark and search.

Errors are written to stderr as one JSON object and the exit code is
nonzero.  ``TABSURV_LOG`` sets the log level (default WARNING).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .dataset import DataError, apply_preprocessing, fit_record, holdout_indices, load_csv, load_schema
from .experiment import ExperimentPlan, run_experiment, write_report
from .persistence import BundleError, load_bundle, save_bundle
from .simulation import SimConfig, generate, synthetic_covariates
from .training import TrainConfig, evaluate, random_search, train

LOG_ENV = "TABSURV_LOG"


def _read_json(path):
    with open(path) as fh:
        return json.load(fh)


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _train_val(data_path, schema, val_fraction: float, seed: int):
    raw = load_csv(data_path, schema)
    tr_idx, va_idx = holdout_indices(raw.events, val_fraction, seed)
    train_raw, val_raw = raw.subset(tr_idx), raw.subset(va_idx)
    record = fit_record(train_raw)
    return apply_preprocessing(train_raw, record), apply_preprocessing(val_raw, record), record


def cmd_train(args) -> dict:
    schema = load_schema(args.schema)
    cfg = TrainConfig.from_dict(_read_json(args.config))
    train_set, val_set, record = _train_val(args.data, schema, args.val_fraction, cfg.seed)
    bundle, history = train(train_set, val_set, cfg, record=record, schema=schema)
    save_bundle(bundle, args.out)
    return {"bundle": str(args.out), "epochs": history.epochs_trained, "best_epoch": history.best_epoch,
            "best_val_cindex": history.best_val_cindex}


def cmd_eval(args) -> dict:
    bundle = load_bundle(args.bundle)
    if bundle.schema is None or bundle.record is None:
        raise BundleError("bundle lacks the schema or preprocessing record needed to read raw data")
    test_set = apply_preprocessing(load_csv(args.data, bundle.schema), bundle.record)
    report = evaluate(bundle, test_set, with_ks=args.ks)
    _write_json(args.report, report.to_dict())
    return report.to_dict()


def cmd_simulate(args) -> dict:
    d = _read_json(args.config)
    n, dim, feature_seed = d.pop("n", 2982), d.pop("d", 5), d.pop("feature_seed", 0)
    cfg = SimConfig.from_dict(d)
    sim = generate(synthetic_covariates(n, dim, feature_seed), cfg)
    names = sim.data.feature_names
    out = Path(args.out)
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([*names, "time", "event"])
        for x, t, e in zip(sim.data.features, sim.data.times, sim.data.events):
            writer.writerow([*(repr(float(v)) for v in x), repr(float(t)), int(e)])
    sidecar = out.with_suffix(".meta.json")
    _write_json(sidecar, {
        "config": cfg.to_dict(), "seed": cfg.seed, "n": n, "d": dim, "feature_seed": feature_seed,
        "betas": sim.betas.tolist(), "clusters": sim.clusters.tolist(),
        "schema": {**{k: "numeric" for k in names}, "time": "time", "event": "event"},
    })
    return {"csv": str(out), "sidecar": str(sidecar), "rows": n, "event_rate": float(sim.data.events.mean())}


def cmd_benchmark(args) -> dict:
    plan = ExperimentPlan.from_json(args.plan)
    report = run_experiment(plan)
    jpath, cpath = write_report(report, args.out)
    return {"json": str(jpath), "csv": str(cpath), "failures": len(report["failures"])}


def cmd_search(args) -> dict:
    space = _read_json(args.space)
    base = TrainConfig.from_dict(_read_json(args.base)) if args.base else None
    train_set, val_set, _ = _train_val(args.data, load_schema(args.schema), args.val_fraction, args.seed)
    best, trials = random_search(space, args.budget, train_set, val_set, seed=args.seed, base=base)
    result = {"best": best.to_dict(),
              "trials": [{"config": t.config.to_dict(), "val_cindex": t.val_cindex, "error": t.error}
                         for t in trials]}
    if args.out:
        _write_json(args.out, result)
    return {"best": best.to_dict(), "best_val_cindex": max(t.val_cindex for t in trials if t.val_cindex is not None)}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tabsurv", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="fit one model and save a bundle")
    t.add_argument("--data", required=True)
    t.add_argument("--schema", required=True)
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--val-fraction", type=float, default=0.25)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a saved bundle on a CSV")
    e.add_argument("--bundle", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--report", required=True)
    e.add_argument("--ks", action="store_true", help="also compute the KS statistic")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("simulate", help="write a bimodal synthetic dataset")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("benchmark", help="run a repeated-seed experiment plan")
    b.add_argument("--plan", required=True)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_benchmark)

    r = sub.add_parser("search", help="random hyperparameter search")
    r.add_argument("--space", required=True)
    r.add_argument("--budget", type=int, required=True)
    r.add_argument("--data", required=True)
    r.add_argument("--schema", required=True)
    r.add_argument("--base", help="config JSON supplying values outside the space")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--val-fraction", type=float, default=0.25)
    r.add_argument("--out")
    r.set_defaults(func=cmd_search)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get(LOG_ENV, "WARNING").upper(), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        result = args.func(args)
    except (DataError, BundleError, ValueError, FloatingPointError, RuntimeError, OSError, KeyError) as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc), "command": args.command}, sys.stderr)
        sys.stderr.write("\n")
        return 1
    json.dump(result, sys.stdout, sort_keys=True)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
