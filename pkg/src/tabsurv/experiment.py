"""Repeated-seed benchmark runner.

A plan names one dataset, a fixed train/validation/test split and a set of
model configs.  Run ``r`` trains every config with seed
``base_seed + r + config.seed`` (the config seed acts as an offset) and
evaluates it on the test part; results are aggregated into mean/std metric
values and mean/std per-run ranks.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dataset import SplitSpec, apply_preprocessing, fit_record, load_csv, load_schema, split_table, \
    stratified_split_indices
from .metrics import rank_models
from .simulation import SimConfig, generate, synthetic_covariates
from .training import TrainConfig, evaluate, train

log = logging.getLogger(__name__)

# metric name -> (report attribute, higher is better)
METRICS = {"cindex": ("c_index", True), "ibs": ("ibs", False), "auc": ("integrated_auc", True),
           "ks": ("ks", False)}
MODES = ("early_stopping", "merge")


@dataclass
class ExperimentPlan:
    """``dataset`` is either ``{"csv": path, "schema": path-or-mapping}`` or
    ``{"simulate": {"n": .., "d": .., "config": {...}}}``."""

    dataset: dict
    models: dict[str, dict]
    n_runs: int = 20
    base_seed: int = 0
    split: SplitSpec = field(default_factory=SplitSpec)
    mode: str = "early_stopping"
    with_ks: bool = False
    out_dir: str | None = None

    def __post_init__(self):
        if self.n_runs < 1:
            raise ValueError("n_runs must be at least 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not self.models:
            raise ValueError("plan has no models")
        self.models = {name: TrainConfig.from_dict(c).to_dict() if isinstance(c, dict) else c.to_dict()
                       for name, c in self.models.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentPlan":
        d = dict(d)
        if "split" in d:
            s = d["split"]
            d["split"] = SplitSpec(tuple(s.get("fractions", SplitSpec().fractions)), s.get("seed", 0))
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentPlan":
        with open(path) as fh:
            plan = cls.from_dict(json.load(fh))
        src = plan.dataset
        base = Path(path).parent
        if "csv" in src:
            src["csv"] = str(base / src["csv"])
            if isinstance(src.get("schema"), str):
                src["schema"] = str(base / src["schema"])
        return plan


def load_plan_splits(plan: ExperimentPlan):
    """Preprocessed (train, validation, test) for the plan's fixed split."""
    src = plan.dataset
    if "csv" in src:
        schema = src["schema"]
        if isinstance(schema, str):
            schema = load_schema(schema)
        raw = load_csv(src["csv"], schema, src.get("sentinel"))
        parts = split_table(raw, plan.split)
        record = fit_record(parts[0])
        return tuple(apply_preprocessing(p, record) for p in parts)
    if "simulate" in src:
        sim = src["simulate"]
        x = synthetic_covariates(sim.get("n", 2982), sim.get("d", 5), sim.get("feature_seed", 0))
        data = generate(x, SimConfig.from_dict(sim.get("config", {}))).data
        return tuple(data.subset(i) for i in stratified_split_indices(data.events, plan.split))
    raise ValueError("dataset needs a 'csv' or 'simulate' entry")


def _fit_one(cfg: TrainConfig, train_set, val_set, mode: str):
    if mode == "merge":
        merged = train_set.subset(np.arange(train_set.n_rows))
        merged.features = np.concatenate([train_set.features, val_set.features])
        merged.times = np.concatenate([train_set.times, val_set.times])
        merged.events = np.concatenate([train_set.events, val_set.events])
        return train(merged, None, cfg)
    return train(train_set, val_set, cfg)


def run_experiment(plan: ExperimentPlan, splits=None) -> dict:
    """Train/evaluate every model for every run and aggregate.

    Failed runs are recorded under ``failures`` and excluded from ranking;
    ranks use only runs in which every model succeeded.
    """
    train_set, val_set, test_set = splits if splits is not None else load_plan_splits(plan)
    names = list(plan.models)
    metric_keys = [k for k in METRICS if k != "ks" or plan.with_ks]
    per_run = {n: {k: [None] * plan.n_runs for k in metric_keys} for n in names}
    failures = []
    for r in range(plan.n_runs):
        for name in names:
            cfg = TrainConfig.from_dict(plan.models[name])
            cfg = replace(cfg, seed=plan.base_seed + r + cfg.seed)
            try:
                bundle, _ = _fit_one(cfg, train_set, val_set, plan.mode)
                rep = evaluate(bundle, test_set, with_ks=plan.with_ks)
            except (ValueError, FloatingPointError, RuntimeError) as exc:
                log.warning("run %d model %s failed: %s", r, name, exc)
                failures.append({"run": r, "model": name, "error": str(exc)})
                continue
            for k in metric_keys:
                per_run[name][k][r] = getattr(rep, METRICS[k][0])
            log.info("run %d %s: C=%.4f IBS=%.4f AUC=%.4f", r, name, rep.c_index, rep.ibs, rep.integrated_auc)

    complete = [r for r in range(plan.n_runs) if all(per_run[n]["cindex"][r] is not None for n in names)]
    models = {}
    for name in names:
        models[name] = {"config": plan.models[name], "per_seed": per_run[name]}
        for k in metric_keys:
            vals = np.array([v for v in per_run[name][k] if v is not None], dtype=np.float64)
            models[name][f"{k}_mean"] = float(vals.mean()) if vals.size else None
            models[name][f"{k}_std"] = float(vals.std()) if vals.size else None
    for k in metric_keys:
        if not complete:
            break
        summary, _ = rank_models({n: [per_run[n][k][r] for r in complete] for n in names},
                                 higher_is_better=METRICS[k][1])
        for name, (mean, std) in summary.items():
            models[name][f"{k}_rank"] = mean
            models[name][f"{k}_rank_std"] = std
    return {
        "n_runs": plan.n_runs,
        "base_seed": plan.base_seed,
        "split": {"fractions": list(plan.split.fractions), "seed": plan.split.seed},
        "mode": plan.mode,
        "sizes": {"train": train_set.n_rows, "validation": val_set.n_rows, "test": test_set.n_rows},
        "models": models,
        "failures": failures,
    }


def sweep_models(base: TrainConfig, fractions=(0.25, 0.5, 1.0), rs=(1, 3, 5)) -> dict[str, dict]:
    """One config per (grid fraction, r) cell, named ``gf=<f>,r=<r>``."""
    return {f"gf={f},r={r}": replace(base, grid_fraction=f, r=r).to_dict() for f in fractions for r in rs}


def table_rows(report: dict) -> list[dict]:
    keys = [k for k in METRICS if any(f"{k}_mean" in m for m in report["models"].values())]
    rows = []
    for name, m in report["models"].items():
        row = {"model": name}
        for k in keys:
            for suffix in ("mean", "std", "rank", "rank_std"):
                row[f"{k}_{suffix}"] = m.get(f"{k}_{suffix}")
        rows.append(row)
    return rows


def write_report(report: dict, out_dir) -> tuple[Path, Path]:
    """``results.json`` plus a ``results.csv`` table with one row per model."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jpath, cpath = out / "results.json", out / "results.csv"
    jpath.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    rows = table_rows(report)
    with cpath.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in row.items()})
    return jpath, cpath
