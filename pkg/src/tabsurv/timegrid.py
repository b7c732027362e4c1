"""Discretization of the time axis and conversions between bin
probabilities and survival vectors."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SUM_TOLERANCE = 1e-4


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing positive grid points ``tau_1 < ... < tau_m``.

    Bin ``i`` (1-based) covers ``[tau_i, tau_{i+1})`` with an implicit
    ``tau_{m+1} = +inf``.
    """

    taus: np.ndarray

    def __post_init__(self):
        taus = np.asarray(self.taus, dtype=np.float64)
        if taus.ndim != 1 or taus.size < 2:
            raise ValueError("a time grid needs at least 2 points")
        if not np.all(np.isfinite(taus)) or taus[0] <= 0:
            raise ValueError("grid points must be finite and positive")
        if np.any(np.diff(taus) <= 0):
            raise ValueError("grid points must be strictly increasing")
        taus.setflags(write=False)
        object.__setattr__(self, "taus", taus)

    @property
    def m(self) -> int:
        return int(self.taus.size)

    def __len__(self) -> int:
        return self.m


@dataclass(frozen=True)
class DiscreteSurvival:
    """Bin probabilities and survival values on a grid.

    Both arrays have shape ``(..., m)``; a leading batch axis holds one curve
    per row.
    """

    probs: np.ndarray
    survival: np.ndarray

    @property
    def m(self) -> int:
        return int(self.probs.shape[-1])

    def __len__(self) -> int:
        return 1 if self.probs.ndim == 1 else self.probs.shape[0]

    def __getitem__(self, idx) -> "DiscreteSurvival":
        return DiscreteSurvival(self.probs[idx], self.survival[idx])


def build_grid(train_times, train_events, fraction: float = 1.0) -> TimeGrid:
    """Grid from the unique uncensored training times.

    With ``fraction < 1`` keep ``ceil(fraction * m)`` evenly spaced order
    statistics, always including the first and the last.
    """
    times = np.asarray(train_times, dtype=np.float64)
    events = np.asarray(train_events).astype(bool)
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"grid fraction must be in (0, 1], got {fraction}")
    taus = np.unique(times[events])
    if taus.size < 2:
        raise ValueError(f"need at least 2 distinct uncensored times, found {taus.size}")
    if fraction < 1.0:
        keep = max(2, math.ceil(fraction * taus.size))
        idx = np.unique(np.round(np.linspace(0, taus.size - 1, keep)).astype(int))
        taus = taus[idx]
    return TimeGrid(taus)


def interval_index(grid: TimeGrid, t):
    """Largest 1-based ``i`` with ``tau_i <= t``; 0 when ``t < tau_1``.

    Vectorized over ``t``.
    """
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr <= 0):
        raise ValueError("query times must be positive")
    idx = np.searchsorted(grid.taus, t_arr, side="right")
    return int(idx) if idx.ndim == 0 else idx


def probs_to_survival(p) -> DiscreteSurvival:
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < -1e-12):
        raise ValueError("bin probabilities must be nonnegative")
    total = p.sum(axis=-1)
    if np.any(np.abs(total - 1.0) > SUM_TOLERANCE):
        worst = float(np.max(np.abs(total - 1.0)))
        raise ValueError(f"bin probabilities do not sum to 1 (max deviation {worst:.3g})")
    s = np.clip(1.0 - np.cumsum(p, axis=-1), 0.0, 1.0)
    return DiscreteSurvival(p, s)


def survival_at(curve: DiscreteSurvival, grid: TimeGrid, t):
    """Right-continuous step evaluation: 1 before ``tau_1``, else ``S_{I(t)}``.

    For batched curves ``(n, m)`` and ``t`` of shape ``(q,)`` the result is
    ``(n, q)``.
    """
    idx = np.atleast_1d(interval_index(grid, t))
    s = curve.survival
    padded = np.concatenate([np.ones(s.shape[:-1] + (1,)), s], axis=-1)
    out = padded[..., idx]
    if np.ndim(t) == 0:
        out = out[..., 0]
        return float(out) if out.ndim == 0 else out
    return out
