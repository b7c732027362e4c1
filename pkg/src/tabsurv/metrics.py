"""Censoring-aware evaluation metrics."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .timegrid import DiscreteSurvival, TimeGrid, survival_at


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous step function with value ``initial`` before the first jump."""

    times: np.ndarray
    values: np.ndarray
    initial: float = 1.0

    def __call__(self, t):
        idx = np.searchsorted(self.times, t, side="right")
        return self._lookup(idx)

    def left_limit(self, t):
        """Value just before ``t``."""
        idx = np.searchsorted(self.times, t, side="left")
        return self._lookup(idx)

    def _lookup(self, idx):
        padded = np.concatenate([[self.initial], self.values])
        out = padded[idx]
        return float(out) if np.ndim(out) == 0 else out


def kaplan_meier(times, events) -> StepFunction:
    """Product-limit estimate ``prod_{t_i <= t} (1 - d_i / n_i)``.

    Pass ``1 - events`` to estimate the censoring distribution.
    """
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events).astype(bool)
    if times.size == 0:
        raise ValueError("Kaplan-Meier needs at least one observation")
    uniq, inverse = np.unique(times, return_inverse=True)
    deaths = np.bincount(inverse, weights=events, minlength=uniq.size)
    counts = np.bincount(inverse, minlength=uniq.size)
    at_risk = counts[::-1].cumsum()[::-1]
    jump = deaths > 0
    a, d = at_risk[jump], deaths[jump]
    if a.size == 0:
        return StepFunction(uniq[:0], np.empty(0))
    # prod (a_i - d_i) / a_i rewritten as (a_j - d_j) / a_1 * prod (a_{i-1} - d_{i-1}) / a_i;
    # the ratios are exactly 1 between jumps without censoring, so that case is exact
    ratio = np.concatenate([[1.0], (a[:-1] - d[:-1]) / a[1:]])
    surv = (a - d) / a[0] * np.cumprod(ratio)
    return StepFunction(uniq[jump], surv)


def expected_time(curve: DiscreteSurvival, grid: TimeGrid) -> np.ndarray:
    """``sum_i p_i * tau_i`` (left bin endpoints)."""
    return curve.probs @ grid.taus


def harrell_cindex(predicted_times, times, events) -> float:
    """Fraction of comparable pairs (``delta_i = 1``, ``t_i < t_j``) with
    ``that_i < that_j``; tied predictions count one half."""
    pred = np.asarray(predicted_times, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events).astype(bool)
    i = np.flatnonzero(events)
    comparable = times[i][:, None] < times[None, :]
    n_pairs = comparable.sum()
    if n_pairs == 0:
        raise ValueError("no comparable pairs")
    pi, pj = pred[i][:, None], pred[None, :]
    score = np.where(pi < pj, 1.0, np.where(pi == pj, 0.5, 0.0))
    return float((score * comparable).sum() / n_pairs)


def brier_score(curves: DiscreteSurvival, grid: TimeGrid, times, events, G: StepFunction, t: float) -> float:
    """Inverse-probability-of-censoring weighted Brier score at ``t``."""
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events).astype(bool)
    s = survival_at(curves, grid, t)
    died = (times <= t) & events
    alive = times > t
    g_t = G(t)
    g_ev = np.asarray(G.left_limit(times), dtype=np.float64)
    if (alive.any() and g_t <= 0) or np.any(g_ev[died] <= 0):
        raise ValueError(f"censoring survival G reaches 0 at or before t={t}")
    term_died = np.where(died, s**2 / np.where(died, g_ev, 1.0), 0.0)
    term_alive = np.where(alive, (1.0 - s) ** 2 / (g_t if alive.any() else 1.0), 0.0)
    return float(np.mean(term_died + term_alive))


def integrated_brier(curves: DiscreteSurvival, grid: TimeGrid, times, events, G: StepFunction | None = None,
                     t_max: float | None = None) -> float:
    """Trapezoidal average of the Brier score over grid points up to ``t_max``.

    ``t_max`` defaults to the largest uncensored time.  The integral runs
    from the first evaluation point and is divided by the span it covers.
    ``G`` defaults to the Kaplan-Meier censoring distribution of the given
    rows.
    """
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events).astype(bool)
    if G is None:
        G = kaplan_meier(times, ~events)
    if t_max is None:
        t_max = float(times[events].max())
    pts = grid.taus[grid.taus <= t_max]
    if pts.size == 0 or pts[-1] < t_max:
        pts = np.append(pts, t_max)
    if pts.size < 2:
        raise ValueError("integrated Brier score needs at least 2 evaluation points")
    bs = np.array([brier_score(curves, grid, times, events, G, t) for t in pts])
    return float(np.trapezoid(bs, pts) / (pts[-1] - pts[0]))


def default_auc_times(times, events) -> np.ndarray:
    """Deciles (10th..90th percentile) of the uncensored times."""
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events).astype(bool)
    return np.unique(np.percentile(times[events], np.arange(10, 100, 10)))


def auc_at(risk, times, events, G: StepFunction, t: float) -> float | None:
    """Cumulative/dynamic AUC at ``t``; None when there is no case or control."""
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events).astype(bool)
    cases = (times <= t) & events
    controls = times > t
    if not cases.any() or not controls.any():
        return None
    w = 1.0 / np.asarray(G.left_limit(times[cases]), dtype=np.float64)
    rc, rk = risk[cases][:, None], risk[controls][None, :]
    score = np.where(rc > rk, 1.0, np.where(rc == rk, 0.5, 0.0))
    return float((w * score.sum(axis=1)).sum() / (w.sum() * controls.sum()))


def cumulative_dynamic_auc(curves: DiscreteSurvival, grid: TimeGrid, times, events, G: StepFunction | None = None,
                           eval_times=None):
    """Per-time AUCs (NaN where skipped) and their unweighted mean.

    The risk score at ``t`` is ``1 - S(t | x)``; cases are weighted by
    ``1 / G(t_i-)``.
    """
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events).astype(bool)
    if G is None:
        G = kaplan_meier(times, ~events)
    if eval_times is None:
        eval_times = default_auc_times(times, events)
    eval_times = np.atleast_1d(np.asarray(eval_times, dtype=np.float64))
    risk = 1.0 - survival_at(curves, grid, eval_times)
    aucs = np.full(eval_times.size, np.nan)
    for q, t in enumerate(eval_times):
        if G(t) <= 0:
            warnings.warn(f"censoring survival is 0 at t={t}; AUC skipped", RuntimeWarning, stacklevel=2)
            continue
        a = auc_at(risk[:, q], times, events, G, t)
        if a is None:
            warnings.warn(f"no case/control pair at t={t}; AUC skipped", RuntimeWarning, stacklevel=2)
            continue
        aucs[q] = a
    if np.all(np.isnan(aucs)):
        raise ValueError("AUC undefined at every evaluation time")
    return aucs, float(np.nanmean(aucs))


def ks_statistic(curves: DiscreteSurvival, grid: TimeGrid, observed_times) -> float:
    """Sup-distance on the grid between the population-averaged predicted
    CDF and the empirical CDF of ``observed_times``."""
    obs = np.sort(np.asarray(observed_times, dtype=np.float64))
    if obs.size == 0 or len(curves) == 0:
        raise ValueError("KS statistic needs predictions and observed times")
    p = np.atleast_2d(curves.probs).mean(axis=0)
    model_cdf = np.minimum(np.cumsum(p), 1.0)
    emp_cdf = np.searchsorted(obs, grid.taus, side="right") / obs.size
    return float(np.max(np.abs(model_cdf - emp_cdf)))


def rank_models(values: dict[str, list[float]], higher_is_better: bool = True):
    """Per-run ranks (1 = best, ties share the mean rank) aggregated per model.

    Returns ``{model: (mean_rank, std_rank)}`` plus the raw rank table.
    """
    names = list(values)
    runs = {len(v) for v in values.values()}
    if len(runs) != 1:
        raise ValueError("every model needs the same number of runs")
    table = np.array([values[n] for n in names], dtype=np.float64)  # (models, runs)
    score = -table if higher_is_better else table
    ranks = np.apply_along_axis(rankdata, 0, score) if table.size else table
    summary = {n: (float(ranks[i].mean()), float(ranks[i].std())) for i, n in enumerate(names)}
    return summary, ranks


@dataclass
class MetricReport:
    c_index: float
    ibs: float
    integrated_auc: float
    ks: float | None = None
    per_seed: dict[str, list[float]] = field(default_factory=dict)
    rank_mean: dict[str, float] = field(default_factory=dict)
    rank_std: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("c_index", "integrated_auc"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.ibs < 0:
            raise ValueError(f"ibs must be nonnegative, got {self.ibs}")
        if self.ks is not None and not 0.0 <= self.ks <= 1.0:
            raise ValueError(f"ks must be in [0, 1], got {self.ks}")

    def to_dict(self) -> dict:
        return {
            "c_index": self.c_index,
            "ibs": self.ibs,
            "integrated_auc": self.integrated_auc,
            "ks": self.ks,
            "per_seed": self.per_seed,
            "rank_mean": self.rank_mean,
            "rank_std": self.rank_std,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        return cls(**{k: d.get(k) for k in ("c_index", "ibs", "integrated_auc", "ks")},
                   per_seed=d.get("per_seed", {}), rank_mean=d.get("rank_mean", {}),
                   rank_std=d.get("rank_std", {}))
