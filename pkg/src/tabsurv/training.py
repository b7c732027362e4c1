"""Mini-batch training with early stopping, evaluation and random search."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import nn
from .dataset import PreprocessingRecord, SurvivalDataset
from .metrics import (MetricReport, StepFunction, cumulative_dynamic_auc, default_auc_times, expected_time,
                      harrell_cindex, integrated_brier, kaplan_meier, ks_statistic)
from .models import Architecture, EnsembleModel, HEADS, PiecewiseLinearEmbedding, WEIBULL_HEADS
from .survhl import SurvHLConfig, survhl_batch
from .timegrid import DiscreteSurvival, TimeGrid, build_grid, interval_index

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    head: str = "LS"
    n_layers: int = 2
    hidden: int = 128
    n_members: int = 1
    activation: str = "relu"
    layer_norm: bool = False
    dropout: float = 0.0
    r: int = 3
    lr: float = 1e-3
    batch_size: int = 64
    emb_bins: int = 32
    emb_width: int = 8
    emb_activation: bool = False
    grid_fraction: float = 1.0
    max_epochs: int = 200
    patience: int = 10
    seed: int = 0
    kernel: str = "gaussian"

    def __post_init__(self):
        if self.head not in HEADS:
            raise ValueError(f"unknown head {self.head!r}")
        if self.head == "LS" and (self.n_members != 1 or self.dropout != 0.0):
            raise ValueError("LS uses a single network without dropout")
        if self.lr <= 0 or self.batch_size < 1 or self.max_epochs < 1 or self.patience < 0:
            raise ValueError("lr, batch_size, max_epochs must be positive and patience nonnegative")
        if self.emb_bins < 1 or self.emb_width < 1:
            raise ValueError("embedding bins and width must be positive")
        if not 0.0 < self.grid_fraction <= 1.0:
            raise ValueError("grid_fraction must be in (0, 1]")
        self.architecture()
        self.loss_config()

    def architecture(self) -> Architecture:
        return Architecture(self.head, self.n_members, self.n_layers, self.hidden, self.activation,
                            self.layer_norm, self.dropout, self.emb_bins, self.emb_width, self.emb_activation)

    def loss_config(self) -> SurvHLConfig:
        return SurvHLConfig(r=self.r, kernel=self.kernel)

    def in_search_domain(self) -> bool:
        """Whether the tunable values lie in the published tuning ranges."""
        ens = self.head != "LS"
        return all([
            1 <= self.n_layers <= (3 if ens else 4),
            self.hidden in ((64, 128, 256) if self.head in WEIBULL_HEADS else (128, 256, 512)),
            (self.n_members in (8, 16, 32)) if ens else self.n_members == 1,
            1 <= self.r <= 5,
            1e-4 <= self.lr <= 5e-3,
            self.batch_size in (32, 64, 96),
            (1e-2 <= self.dropout <= 1e-1) if self.head == "LAS" else True,
            self.emb_bins in (32, 48, 64),
            self.emb_width in (8, 12, 16),
        ])

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)


@dataclass
class ModelBundle:
    config: TrainConfig
    model: EnsembleModel
    censoring: StepFunction
    record: PreprocessingRecord | None = None
    schema: dict | None = None

    @property
    def grid(self) -> TimeGrid:
        return self.model.grid

    def predict(self, x) -> DiscreteSurvival:
        return self.model.predict(x)


@dataclass
class TrainingLog:
    train_loss: list[float] = field(default_factory=list)
    val_cindex: list[float] = field(default_factory=list)
    best_epoch: int = 0
    best_val_cindex: float = -math.inf
    stopped_early: bool = False

    @property
    def epochs_trained(self) -> int:
        return len(self.train_loss)


class TrainingDiverged(FloatingPointError):
    pass


def build_model(train_set: SurvivalDataset, cfg: TrainConfig) -> EnsembleModel:
    grid = build_grid(train_set.times, train_set.events, cfg.grid_fraction)
    num_idx, cat_idx = train_set.numeric_idx, train_set.categorical_idx
    emb = None
    if num_idx.size:
        emb = PiecewiseLinearEmbedding.fit(train_set.features[:, num_idx], cfg.emb_bins, cfg.emb_width,
                                           cfg.emb_activation)
    scale = float(np.median(train_set.times[train_set.events.astype(bool)]))
    return EnsembleModel(cfg.architecture(), grid, num_idx, cat_idx, emb, time_scale=scale, seed=cfg.seed)


def validation_cindex(model: EnsembleModel, data: SurvivalDataset) -> float:
    curves = model.predict(data.features)
    return harrell_cindex(expected_time(curves, model.grid), data.times, data.events)


def batch_loss(model: EnsembleModel, x, idxs, deltas, loss_cfg: SurvHLConfig, training: bool = True,
               rng: np.random.Generator | None = None) -> float:
    """Sum over members of the mean per-member loss; fills parameter gradients."""
    raw, cache = model.forward(x, training=training, rng=rng)
    p, pcache = model.member_probs(raw)
    k, b, m = p.shape
    flat = DiscreteSurvival(p.reshape(k * b, m), np.clip(1.0 - np.cumsum(p, axis=-1), 0.0, 1.0).reshape(k * b, m))
    mean_loss, grad = survhl_batch(flat, np.tile(idxs, k), np.tile(deltas, k), loss_cfg)
    # sum of k per-member means == k * mean over the stacked batch
    grad_raw = model.member_probs_backward(k * grad.reshape(k, b, m), pcache)
    model.backward(grad_raw, cache)
    return k * mean_loss


def train(train_set: SurvivalDataset, val_set: SurvivalDataset | None, cfg: TrainConfig,
          record: PreprocessingRecord | None = None, schema: dict | None = None):
    """Fit a model; returns ``(bundle, log)``.

    With a validation set the parameters of the best validation C-index epoch
    are kept (epoch 0 is the initialization) and training stops once
    ``epoch - best_epoch >= patience``.  Without one, all ``max_epochs`` run.
    """
    model = build_model(train_set, cfg)
    loss_cfg = cfg.loss_config()
    opt = nn.AdamState(lr=cfg.lr)
    rng = np.random.default_rng([cfg.seed, 1])
    idxs = np.atleast_1d(interval_index(model.grid, train_set.times))
    deltas = train_set.events.astype(bool)
    x = train_set.features
    n = train_set.n_rows
    history = TrainingLog()

    best = model.store.snapshot()
    if val_set is not None:
        history.best_val_cindex = validation_cindex(model, val_set)

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            bi = order[start:start + cfg.batch_size]
            loss = batch_loss(model, x[bi], idxs[bi], deltas[bi], loss_cfg, training=True, rng=rng)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
            try:
                nn.adam_step(model.store, opt)
            except FloatingPointError as exc:
                raise TrainingDiverged(f"epoch {epoch}: {exc}") from exc
            total += loss * bi.size
        history.train_loss.append(total / n)
        if val_set is None:
            continue
        c = validation_cindex(model, val_set)
        history.val_cindex.append(c)
        if c > history.best_val_cindex:
            history.best_val_cindex, history.best_epoch = c, epoch
            best = model.store.snapshot()
        log.debug("epoch %d loss %.5f val C %.4f", epoch, history.train_loss[-1], c)
        if epoch - history.best_epoch >= cfg.patience:
            history.stopped_early = epoch < cfg.max_epochs
            break

    if val_set is not None:
        model.store.restore(best)
    else:
        history.best_epoch = cfg.max_epochs
    censoring = kaplan_meier(train_set.times, 1 - train_set.events)
    return ModelBundle(cfg, model, censoring, record or train_set.record, schema), history


def _horizon(times, events, G: StepFunction) -> float:
    t_max = float(np.max(times[events]))
    if G.values.size and G.values[-1] <= 0:
        # keep the horizon where the censoring survival is still positive
        t_max = min(t_max, float(np.nextafter(G.times[-1], -np.inf)))
    return t_max


def evaluate(bundle: ModelBundle, test_set: SurvivalDataset, with_ks: bool = False) -> MetricReport:
    """C-index, IBS and integrated AUC on held-out rows (read-only)."""
    model = bundle.model
    expected = model.numeric_idx.size + model.categorical_idx.size
    if test_set.features.shape[1] != expected:
        raise ValueError(f"test features have width {test_set.features.shape[1]}, model expects {expected}")
    curves = model.predict(test_set.features)
    times = test_set.times
    events = test_set.events.astype(bool)
    G = bundle.censoring
    c = harrell_cindex(expected_time(curves, model.grid), times, events)
    t_max = _horizon(times, events, G)
    ibs = integrated_brier(curves, model.grid, times, events, G, t_max=t_max)
    eval_times = default_auc_times(times, events)
    _, auc = cumulative_dynamic_auc(curves, model.grid, times, events, G, eval_times[eval_times <= t_max])
    ks = ks_statistic(curves, model.grid, times[events]) if with_ks else None
    return MetricReport(c, ibs, auc, ks)


# -- random search ------------------------------------------------------------


def default_space(head: str) -> dict:
    """Tuning ranges per head: ``choice``, ``int`` (inclusive) or ``loguniform``."""
    common = {
        "activation": {"choice": ["relu", "silu", "selu"]},
        "r": {"int": [1, 5]},
        "lr": {"loguniform": [1e-4, 5e-3]},
        "batch_size": {"choice": [32, 64, 96]},
        "emb_bins": {"choice": [32, 48, 64]},
        "emb_activation": {"choice": [False, True]},
        "emb_width": {"choice": [8, 12, 16]},
    }
    if head == "LS":
        return {"head": {"choice": ["LS"]}, "n_layers": {"int": [1, 4]},
                "hidden": {"choice": [128, 256, 512]}, "layer_norm": {"choice": [False, True]}, **common}
    if head == "LAS":
        return {"head": {"choice": ["LAS"]}, "n_layers": {"int": [1, 3]}, "hidden": {"choice": [128, 256, 512]},
                "n_members": {"choice": [8, 16, 32]}, "dropout": {"loguniform": [1e-2, 1e-1]}, **common}
    if head in WEIBULL_HEADS:
        return {**common, "head": {"choice": [head]}, "n_layers": {"int": [1, 3]},
                "hidden": {"choice": [64, 128, 256]}, "n_members": {"choice": [8, 16, 32]},
                "activation": {"choice": ["relu", "selu"]}, "r": {"choice": [1, 3, 5]}}
    raise ValueError(f"unknown head {head!r}")


def sample_config(space: dict, rng: np.random.Generator, base: TrainConfig | None = None) -> TrainConfig:
    values = {}
    for name, dom in space.items():
        (kind, arg), = dom.items()
        if kind == "choice":
            v = arg[int(rng.integers(len(arg)))]
        elif kind == "int":
            v = int(rng.integers(arg[0], arg[1] + 1))
        elif kind == "uniform":
            v = float(rng.uniform(arg[0], arg[1]))
        elif kind == "loguniform":
            v = float(np.exp(rng.uniform(np.log(arg[0]), np.log(arg[1]))))
        else:
            raise ValueError(f"unknown domain kind {kind!r} for {name!r}")
        values[name] = v
    base_dict = (base or TrainConfig()).to_dict()
    base_dict.update(values)
    if base_dict["head"] == "LS":
        base_dict.update(n_members=1, dropout=0.0)
    return TrainConfig.from_dict(base_dict)


@dataclass
class Trial:
    config: TrainConfig
    val_cindex: float | None
    error: str | None = None


def random_search(space: dict, budget: int, train_set: SurvivalDataset, val_set: SurvivalDataset,
                  seed: int = 0, base: TrainConfig | None = None, candidates=None):
    """Sample ``budget`` configs and keep the best validation C-index.

    ``candidates`` may pre-seed explicit configs evaluated before the random
    ones (they count toward the budget).  Returns ``(best_config, trials)``.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    rng = np.random.default_rng(seed)
    configs = list(candidates or [])[:budget]
    while len(configs) < budget:
        configs.append(sample_config(space, rng, base))
    trials = []
    for cfg in configs:
        cfg = replace(cfg, seed=seed)
        try:
            bundle, history = train(train_set, val_set, cfg)
            trials.append(Trial(cfg, validation_cindex(bundle.model, val_set)))
        except (ValueError, FloatingPointError) as exc:
            log.warning("trial failed: %s", exc)
            trials.append(Trial(cfg, None, str(exc)))
    ok = [t for t in trials if t.val_cindex is not None]
    if not ok:
        raise RuntimeError("every search trial failed")
    best = max(ok, key=lambda t: t.val_cindex)
    return best.config, trials
