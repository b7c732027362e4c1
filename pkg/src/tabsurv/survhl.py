"""Censored histogram loss.

Uncensored rows pay the Gaussian-smoothed negative log-likelihood of the bins
around their event interval; censored rows pay ``-log S`` at their
censoring interval.  The minimized objective is the batch mean of these
nonnegative per-row terms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .timegrid import DiscreteSurvival


@dataclass(frozen=True)
class SurvHLConfig:
    """``r`` is the window radius; the kernel has ``sigma = r / 3``.

    ``kernel="delta"`` puts all weight on the event bin, which is the plain
    discretized likelihood.
    """

    r: int = 1
    epsilon: float = 1e-12
    kernel: str = "gaussian"

    def __post_init__(self):
        if int(self.r) != self.r or self.r < 1:
            raise ValueError(f"r must be a positive integer, got {self.r}")
        if not 0.0 < self.epsilon <= 1e-6:
            raise ValueError(f"epsilon must be in (0, 1e-6], got {self.epsilon}")
        if self.kernel not in ("gaussian", "delta"):
            raise ValueError(f"unknown kernel {self.kernel!r}")


def gaussian_weights(center: int, r: int, m: int) -> np.ndarray:
    """Normalized Gaussian weights over bins ``1..m`` (returned 0-based).

    Support is truncated to ``[center - r, center + r]``.
    """
    if not 1 <= center <= m:
        raise ValueError(f"center {center} outside 1..{m}")
    sigma = r / 3.0
    j = np.arange(1, m + 1)
    w = np.where(np.abs(j - center) <= r, np.exp(-((j - center) ** 2) / (2.0 * sigma**2)), 0.0)
    return w / w.sum()


def weight_matrix(idxs, m: int, cfg: SurvHLConfig) -> np.ndarray:
    """Rows of weights for 1-based centers ``idxs`` (0 is clamped to 1)."""
    centers = np.maximum(np.asarray(idxs, dtype=np.int64), 1)
    if np.any(centers > m):
        raise ValueError(f"interval index exceeds bin count {m}")
    diff = np.arange(1, m + 1)[None, :] - centers[:, None]
    if cfg.kernel == "delta":
        w = (diff == 0).astype(np.float64)
    else:
        sigma = cfg.r / 3.0
        w = np.where(np.abs(diff) <= cfg.r, np.exp(-(diff**2) / (2.0 * sigma**2)), 0.0)
    return w / w.sum(axis=1, keepdims=True)


def survhl_row(curve: DiscreteSurvival, idx: int, delta: int, cfg: SurvHLConfig = SurvHLConfig()) -> float:
    p = np.asarray(curve.probs, dtype=np.float64)
    if delta:
        w = weight_matrix([idx], p.size, cfg)[0]
        return float(-(w * np.log(np.maximum(p, cfg.epsilon))).sum())
    if idx == 0:
        return 0.0
    return float(-np.log(max(curve.survival[idx - 1], cfg.epsilon)))


def survhl_batch(curves: DiscreteSurvival, idxs, deltas, cfg: SurvHLConfig = SurvHLConfig()):
    """Mean loss over the batch and its gradient w.r.t. each row's ``p``.

    ``curves`` holds ``(n, m)`` arrays.  Coordinates hit by the epsilon clamp
    get zero gradient.
    """
    p = np.atleast_2d(curves.probs)
    s = np.atleast_2d(curves.survival)
    idxs = np.asarray(idxs, dtype=np.int64)
    deltas = np.asarray(deltas).astype(bool)
    n, m = p.shape
    if n == 0:
        raise ValueError("empty batch")
    if idxs.shape != (n,) or deltas.shape != (n,):
        raise ValueError("idxs and deltas must have one entry per curve")
    eps = cfg.epsilon
    grad = np.zeros_like(p)
    loss = np.zeros(n)

    ev = np.flatnonzero(deltas)
    if ev.size:
        w = weight_matrix(idxs[ev], m, cfg)
        pe = p[ev]
        live = pe > eps
        loss[ev] = -(w * np.log(np.maximum(pe, eps))).sum(axis=1)
        grad[ev] = np.where(live, -w / (n * np.where(live, pe, 1.0)), 0.0)

    cens = np.flatnonzero(~deltas & (idxs > 0))
    if cens.size:
        si = s[cens, idxs[cens] - 1]
        loss[cens] = -np.log(np.maximum(si, eps))
        g = np.where(si > eps, 1.0 / (n * np.where(si > eps, si, 1.0)), 0.0)
        upto = np.arange(1, m + 1)[None, :] <= idxs[cens][:, None]
        grad[cens] = upto * g[:, None]

    return float(loss.mean()), grad
