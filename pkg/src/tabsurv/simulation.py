"""Bimodal synthetic survival data.

Each row is assigned to one of two latent clusters by a fair coin; its event
time is drawn from the cluster's Weibull proportional-hazards model
``S(t | x) = exp(-lam_c * exp(beta_c . x) * t ** k_c)`` by inverting the
survival function at a uniform draw.  Censoring flags are independent
Bernoulli draws and do not alter the recorded time.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import SurvivalDataset, from_arrays


@dataclass(frozen=True)
class ClusterParams:
    lam: float
    k: float
    beta_low: float
    beta_high: float


@dataclass(frozen=True)
class SimConfig:
    clusters: tuple[ClusterParams, ClusterParams] = (
        ClusterParams(1e-5, 4.0, 0.0, 1.0),
        ClusterParams(1e-10, 6.0, -1.0, 1.0),
    )
    censoring_rate: float = 0.2
    cluster_prob: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.censoring_rate < 1.0:
            raise ValueError(f"censoring_rate must be in [0, 1), got {self.censoring_rate}")
        for c in self.clusters:
            if c.lam <= 0 or c.k <= 0:
                raise ValueError("cluster lam and k must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        if "clusters" in d:
            d["clusters"] = tuple(ClusterParams(**c) for c in d["clusters"])
        return cls(**d)


@dataclass
class SimulatedDataset:
    data: SurvivalDataset
    clusters: np.ndarray
    true_times: np.ndarray
    betas: np.ndarray = field(repr=False)  # (2, d)


def assign_clusters(n: int, seed, p: float = 0.5) -> np.ndarray:
    if n < 2:
        raise ValueError("need at least 2 rows")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return (rng.random(n) < p).astype(np.int64)


def sample_event_time(x, cluster, cfg: SimConfig, u, beta) -> np.ndarray:
    """``T = (-ln u / (lam_c * exp(beta_c . x))) ** (1 / k_c)``; vectorized over rows."""
    u = np.asarray(u, dtype=np.float64)
    if np.any((u <= 0) | (u >= 1)):
        raise ValueError("uniform draws must lie strictly inside (0, 1)")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    cluster = np.broadcast_to(np.asarray(cluster, dtype=np.int64), u.shape)
    beta = np.asarray(beta, dtype=np.float64)
    lam = np.array([c.lam for c in cfg.clusters])[cluster]
    k = np.array([c.k for c in cfg.clusters])[cluster]
    b = beta[cluster] if beta.ndim == 2 else beta
    lin = np.sum(x * b, axis=-1)
    return np.exp((np.log(-np.log(u)) - np.log(lam) - lin) / k)


def draw_betas(d: int, cfg: SimConfig, rng: np.random.Generator) -> np.ndarray:
    return np.stack([rng.uniform(c.beta_low, c.beta_high, d) for c in cfg.clusters])


def synthetic_covariates(n: int, d: int = 5, seed: int = 0) -> np.ndarray:
    """Standard Gaussian stand-in for a real covariate matrix."""
    return np.random.default_rng(seed).standard_normal((n, d))


def generate(base_features, cfg: SimConfig) -> SimulatedDataset:
    x = np.asarray(base_features, dtype=np.float64)
    if x.ndim != 2 or not np.all(np.isfinite(x)):
        raise ValueError("base features must be a finite 2-D matrix")
    n, d = x.shape
    rng = np.random.default_rng(cfg.seed)
    betas = draw_betas(d, cfg, rng)
    clusters = assign_clusters(n, rng, cfg.cluster_prob)
    u = rng.random(n)
    while np.any(u == 0.0):
        u[u == 0.0] = rng.random(int(np.sum(u == 0.0)))
    times = sample_event_time(x, clusters, cfg, u, betas)
    events = (rng.random(n) >= cfg.censoring_rate).astype(np.int64)
    return SimulatedDataset(from_arrays(x, times, events), clusters, times.copy(), betas)
