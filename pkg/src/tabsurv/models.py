"""Numerical embeddings, MLP ensembles and the four survival heads.

Heads:

* ``LS``  -- one network, logits -> softmax -> survival.
* ``LAS`` -- ``k`` networks, logits averaged at inference, then softmax.
* ``WSA`` -- ``k`` networks emitting Weibull ``(lambda, k)``; member
  survival curves are averaged at inference.
* ``WAS`` -- as WSA, but member Weibull parameters are averaged first.

During training every member gets its own loss and the losses are summed;
only the numerical embedding is shared.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .timegrid import DiscreteSurvival, TimeGrid, probs_to_survival

HEADS = ("LS", "LAS", "WSA", "WAS")
LOGIT_HEADS = ("LS", "LAS")
WEIBULL_HEADS = ("WSA", "WAS")
WEIBULL_FLOOR = 1e-6
# raw output 0 maps to 1.0 after softplus
WEIBULL_OFFSET = nn.inverse_softplus(1.0)


# -- piecewise-linear embedding ---------------------------------------------


class PiecewiseLinearEmbedding:
    """Per-feature piecewise-linear encoding followed by a linear projection.

    ``edges[f]`` holds the strictly increasing bin edges of feature ``f``.
    Features with fewer bins than the widest are padded with inert bins that
    always encode to 0.
    """

    def __init__(self, edges, width: int, activation: bool = False):
        self.edges = [np.asarray(e, dtype=np.float64) for e in edges]
        for f, e in enumerate(self.edges):
            if e.ndim != 1 or e.size < 2 or np.any(np.diff(e) <= 0):
                raise ValueError(f"bin edges of feature {f} must be strictly increasing with >= 2 entries")
        self.width = int(width)
        self.activation = bool(activation)
        self.n_bins = max(e.size - 1 for e in self.edges) if self.edges else 0
        lo = np.zeros((len(self.edges), self.n_bins))
        span = np.full((len(self.edges), self.n_bins), np.inf)
        for f, e in enumerate(self.edges):
            nb = e.size - 1
            lo[f, :nb] = e[:-1]
            span[f, :nb] = np.diff(e)
        self._lo, self._span = lo, span

    @classmethod
    def fit(cls, x, n_bins: int, width: int, activation: bool = False) -> "PiecewiseLinearEmbedding":
        """Edges at empirical quantiles of each training column."""
        x = np.asarray(x, dtype=np.float64)
        edges = []
        for col in x.T:
            e = np.unique(np.quantile(col, np.linspace(0.0, 1.0, n_bins + 1)))
            if e.size < 2:
                e = np.array([e[0], e[0] + 1.0])
            edges.append(e)
        return cls(edges, width, activation)

    @property
    def n_features(self) -> int:
        return len(self.edges)

    def encode(self, x) -> np.ndarray:
        """``(n, F)`` raw values to ``(n, F, B)`` encodings in ``[0, 1]``."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} numeric columns, got shape {x.shape}")
        with np.errstate(invalid="ignore"):
            c = (x[:, :, None] - self._lo[None]) / self._span[None]
        return np.clip(np.nan_to_num(c, nan=0.0), 0.0, 1.0)

    def init_params(self, store: nn.ParameterStore, prefix: str = "emb") -> None:
        bound = 1.0 / np.sqrt(max(self.n_bins, 1))
        store.add(f"{prefix}.weight", store.rng.uniform(-bound, bound, (self.n_features, self.n_bins, self.width)))
        store.add(f"{prefix}.bias", store.rng.uniform(-bound, bound, (self.n_features, self.width)))


def embed_numeric_forward(emb: PiecewiseLinearEmbedding, store: nn.ParameterStore, x, prefix: str = "emb"):
    if f"{prefix}.weight" not in store:
        raise ValueError("embedding parameters are not initialized")
    enc = emb.encode(x)
    out = np.einsum("nfb,fbe->nfe", enc, store[f"{prefix}.weight"]) + store[f"{prefix}.bias"][None]
    act_cache = None
    if emb.activation:
        out, act_cache = nn.activation_forward("relu", out)
    return out.reshape(out.shape[0], -1), (enc, act_cache, out.shape)


def embed_numeric_backward(grad_out, cache, store: nn.ParameterStore, prefix: str = "emb") -> None:
    enc, act_cache, shape = cache
    g = grad_out.reshape(shape)
    if act_cache is not None:
        g = nn.activation_backward(g, act_cache)
    store.accumulate(f"{prefix}.weight", np.einsum("nfb,nfe->fbe", enc, g))
    store.accumulate(f"{prefix}.bias", g.sum(axis=0))


# -- Weibull ----------------------------------------------------------------


@dataclass(frozen=True)
class WeibullParams:
    """Scale ``lam`` and shape ``k``; arrays broadcast against each other."""

    lam: np.ndarray
    k: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=np.float64)
        k = np.asarray(self.k, dtype=np.float64)
        if not (np.all(np.isfinite(lam)) and np.all(np.isfinite(k))):
            raise ValueError("Weibull parameters must be finite")
        if np.any(lam < WEIBULL_FLOOR) or np.any(k < WEIBULL_FLOOR):
            raise ValueError(f"Weibull parameters must be >= {WEIBULL_FLOOR}")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "k", k)


def weibull_cdf(t, lam, k):
    return -np.expm1(-((np.asarray(t, dtype=np.float64) / lam) ** k))


def _weibull_probs(lam, k, taus):
    """Bin probabilities with the pre-``tau_1`` mass folded into bin 1.

    Returns ``p`` of shape ``lam.shape + (m,)`` and a backward cache.
    """
    lam = np.asarray(lam, dtype=np.float64)[..., None]
    k = np.asarray(k, dtype=np.float64)[..., None]
    inner = taus[1:]
    log_ratio = np.log(inner) - np.log(lam)
    with np.errstate(over="ignore"):
        z = np.exp(k * log_ratio)
    surv = np.exp(-z)
    cdf = -np.expm1(-z)
    if not (np.all(np.isfinite(cdf)) and np.all(np.isfinite(surv))):
        raise FloatingPointError("non-finite Weibull CDF values")
    shape = z.shape[:-1]
    # p_i = S(a) - S(b) = S(a) * (1 - exp(z(a) - z(b))), exact in both tails
    z_lo = np.concatenate([np.zeros(shape + (1,)), z], axis=-1)
    z_hi = np.concatenate([z, np.full(shape + (1,), np.inf)], axis=-1)
    s_lo = np.concatenate([np.ones(shape + (1,)), surv], axis=-1)
    with np.errstate(invalid="ignore"):
        p = s_lo * -np.expm1(z_lo - z_hi)
    p = np.where(np.isnan(p), 0.0, p)
    return p, (lam, k, log_ratio, z, surv)


def _weibull_probs_backward(grad_p, cache):
    lam, k, log_ratio, z, surv = cache
    grad_cdf = grad_p[..., :-1] - grad_p[..., 1:]
    sz = np.where(surv > 0, surv * np.where(np.isfinite(z), z, 0.0), 0.0)
    grad_lam = (grad_cdf * sz * (-k / lam)).sum(axis=-1)
    grad_k = (grad_cdf * sz * log_ratio).sum(axis=-1)
    return grad_lam, grad_k


def weibull_discretize(params: WeibullParams, grid: TimeGrid) -> DiscreteSurvival:
    """``p_i = F(tau_{i+1}) - F(tau_i)`` with ``F(tau_1)`` replaced by 0 so
    the probabilities sum to one; hence ``S_i = 1 - F(tau_{i+1})``."""
    p, _ = _weibull_probs(params.lam, params.k, grid.taus)
    return probs_to_survival(p)


def weibull_from_raw(raw):
    """Map raw ``(..., 2)`` outputs to positive ``(lam, k)``."""
    shifted = raw + WEIBULL_OFFSET
    return nn.softplus(shifted[..., 0]) + WEIBULL_FLOOR, nn.softplus(shifted[..., 1]) + WEIBULL_FLOOR


# -- ensemble ---------------------------------------------------------------


@dataclass(frozen=True)
class Architecture:
    head: str = "LS"
    n_members: int = 1
    n_layers: int = 2
    hidden: int = 128
    activation: str = "relu"
    layer_norm: bool = False
    dropout: float = 0.0
    emb_bins: int = 32
    emb_width: int = 8
    emb_activation: bool = False

    def __post_init__(self):
        if self.head not in HEADS:
            raise ValueError(f"unknown head {self.head!r}; expected one of {HEADS}")
        if self.head == "LS" and self.n_members != 1:
            raise ValueError("the LS head has exactly one member")
        if self.n_members < 1 or self.n_layers < 1 or self.hidden < 1:
            raise ValueError("n_members, n_layers and hidden must be positive")
        if self.activation not in nn.ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")


class EnsembleModel:
    """Shared numerical embedding feeding ``k`` independent MLP members.

    ``numeric_idx`` columns of the input go through the embedding; the
    remaining ``categorical_idx`` columns (one-hot blocks) are concatenated
    unchanged.  Weibull heads work in time units divided by ``time_scale``.
    """

    def __init__(self, arch: Architecture, grid: TimeGrid, numeric_idx, categorical_idx,
                 embedding: PiecewiseLinearEmbedding | None, time_scale: float = 1.0, seed: int = 0,
                 init: bool = True):
        self.arch = arch
        self.grid = grid
        self.numeric_idx = np.asarray(numeric_idx, dtype=np.int64)
        self.categorical_idx = np.asarray(categorical_idx, dtype=np.int64)
        if self.numeric_idx.size and embedding is None:
            raise ValueError("numeric features need an embedding")
        self.embedding = embedding if self.numeric_idx.size else None
        self.time_scale = float(time_scale)
        self.store = nn.ParameterStore(seed)
        if init:
            self._init_params()

    @property
    def head(self) -> str:
        return self.arch.head

    @property
    def n_out(self) -> int:
        return self.grid.m if self.head in LOGIT_HEADS else 2

    @property
    def input_width(self) -> int:
        n_emb = self.embedding.n_features * self.embedding.width if self.embedding else 0
        return n_emb + self.categorical_idx.size

    @property
    def scaled_taus(self) -> np.ndarray:
        return self.grid.taus / self.time_scale

    def _init_params(self) -> None:
        a, s = self.arch, self.store
        if self.embedding is not None:
            self.embedding.init_params(s)
        fan_in = self.input_width
        if fan_in == 0:
            raise ValueError("model has no input features")
        for i in range(a.n_layers):
            bound = 1.0 / np.sqrt(fan_in)
            s.add(f"block{i}.weight", s.rng.uniform(-bound, bound, (a.n_members, fan_in, a.hidden)))
            s.add(f"block{i}.bias", s.rng.uniform(-bound, bound, (a.n_members, a.hidden)))
            if a.layer_norm:
                s.add(f"block{i}.ln_gain", np.ones((a.n_members, a.hidden)))
                s.add(f"block{i}.ln_shift", np.zeros((a.n_members, a.hidden)))
            fan_in = a.hidden
        bound = 1.0 / np.sqrt(fan_in)
        s.add("head.weight", s.rng.uniform(-bound, bound, (a.n_members, fan_in, self.n_out)))
        s.add("head.bias", s.rng.uniform(-bound, bound, (a.n_members, self.n_out)))

    # raw member outputs ---------------------------------------------------

    def forward(self, x, training: bool = False, rng: np.random.Generator | None = None):
        """Per-member raw outputs ``(k, b, n_out)`` and a backward cache."""
        x = np.asarray(x, dtype=np.float64)
        expected = self.numeric_idx.size + self.categorical_idx.size
        if x.ndim != 2 or x.shape[1] != expected:
            raise ValueError(f"expected input of width {expected}, got shape {x.shape}")
        a, s = self.arch, self.store
        parts, emb_cache = [], None
        if self.embedding is not None:
            e, emb_cache = embed_numeric_forward(self.embedding, s, x[:, self.numeric_idx])
            parts.append(e)
        if self.categorical_idx.size:
            parts.append(x[:, self.categorical_idx])
        h = np.concatenate(parts, axis=1) if len(parts) > 1 else parts[0]
        caches = []
        for i in range(a.n_layers):
            h, lin = nn.linear_forward(h, s[f"block{i}.weight"], s[f"block{i}.bias"])
            ln = None
            if a.layer_norm:
                h, ln = nn.layer_norm_forward(h, s[f"block{i}.ln_gain"], s[f"block{i}.ln_shift"])
            h, act = nn.activation_forward(a.activation, h)
            h, mask = nn.dropout_forward(h, a.dropout, training, rng)
            caches.append((lin, ln, act, mask))
        out, head_cache = nn.linear_forward(h, s["head.weight"], s["head.bias"])
        return out, (emb_cache, caches, head_cache)

    def backward(self, grad_out, cache) -> None:
        """Accumulate parameter gradients for ``grad_out`` of shape ``(k, b, n_out)``."""
        emb_cache, caches, head_cache = cache
        a, s = self.arch, self.store
        g, gW, gb = nn.linear_backward(grad_out, head_cache)
        s.accumulate("head.weight", gW)
        s.accumulate("head.bias", gb)
        for i in reversed(range(a.n_layers)):
            lin, ln, act, mask = caches[i]
            g = nn.dropout_backward(g, mask)
            g = nn.activation_backward(g, act)
            if ln is not None:
                g, gg, gs = nn.layer_norm_backward(g, ln)
                s.accumulate(f"block{i}.ln_gain", gg)
                s.accumulate(f"block{i}.ln_shift", gs)
            g, gW, gb = nn.linear_backward(g, lin)
            s.accumulate(f"block{i}.weight", gW)
            s.accumulate(f"block{i}.bias", gb)
        # g is now summed over members: (b, input_width)
        if emb_cache is not None:
            n_emb = self.embedding.n_features * self.embedding.width
            embed_numeric_backward(g[:, :n_emb], emb_cache, s)

    # per-member curves for training ----------------------------------------

    def member_probs(self, raw):
        """Per-member bin probabilities ``(k, b, m)`` and a backward cache."""
        if self.head in LOGIT_HEADS:
            p = nn.softmax(raw)
            return p, ("softmax", p)
        lam, k = weibull_from_raw(raw)
        p, wcache = _weibull_probs(lam, k, self.scaled_taus)
        return p, ("weibull", raw, wcache)

    def member_probs_backward(self, grad_p, cache):
        if cache[0] == "softmax":
            return nn.softmax_backward(grad_p, cache[1])
        _, raw, wcache = cache
        g_lam, g_k = _weibull_probs_backward(grad_p, wcache)
        shifted = raw + WEIBULL_OFFSET
        return np.stack(
            [nn.softplus_backward(g_lam, shifted[..., 0]), nn.softplus_backward(g_k, shifted[..., 1])],
            axis=-1,
        )

    def weibull_params(self, x) -> WeibullParams:
        """Member Weibull parameters in original time units, shape ``(k, b)``."""
        if self.head not in WEIBULL_HEADS:
            raise ValueError(f"head {self.head} has no Weibull parameters")
        raw, _ = self.forward(x)
        lam, k = weibull_from_raw(raw)
        return WeibullParams(lam * self.time_scale, k)

    def predict(self, x) -> DiscreteSurvival:
        return _PREDICTORS[self.head](self, x, self.grid)


# -- inference-time aggregation -----------------------------------------------


def _check_head(model: EnsembleModel, head: str, grid: TimeGrid | None) -> None:
    if model.head != head:
        raise ValueError(f"model head is {model.head}, not {head}")
    if grid is not None and not np.array_equal(grid.taus, model.grid.taus):
        raise ValueError("grid differs from the one the model was trained on")


def curves_from_logits(member_logits) -> DiscreteSurvival:
    """Average logits over the member axis, then softmax and survival."""
    return probs_to_survival(nn.softmax(np.mean(member_logits, axis=0)))


def curves_from_member_weibull(lam, k, taus) -> DiscreteSurvival:
    """Mixture: discretize each member, then average the probabilities."""
    p, _ = _weibull_probs(lam, k, taus)
    return probs_to_survival(p.mean(axis=0))


def curves_from_mean_weibull(lam, k, taus) -> DiscreteSurvival:
    """Average member parameters, then a single discretization."""
    p, _ = _weibull_probs(np.mean(lam, axis=0), np.mean(k, axis=0), taus)
    return probs_to_survival(p)


def predict_ls(model: EnsembleModel, x, grid: TimeGrid | None = None) -> DiscreteSurvival:
    _check_head(model, "LS", grid)
    raw, _ = model.forward(x)
    return probs_to_survival(nn.softmax(raw[0]))


def predict_las(model: EnsembleModel, x, grid: TimeGrid | None = None) -> DiscreteSurvival:
    _check_head(model, "LAS", grid)
    raw, _ = model.forward(x)
    return curves_from_logits(raw)


def predict_wsa(model: EnsembleModel, x, grid: TimeGrid | None = None) -> DiscreteSurvival:
    _check_head(model, "WSA", grid)
    raw, _ = model.forward(x)
    return curves_from_member_weibull(*weibull_from_raw(raw), model.scaled_taus)


def predict_was(model: EnsembleModel, x, grid: TimeGrid | None = None) -> DiscreteSurvival:
    _check_head(model, "WAS", grid)
    raw, _ = model.forward(x)
    return curves_from_mean_weibull(*weibull_from_raw(raw), model.scaled_taus)


_PREDICTORS = {"LS": predict_ls, "LAS": predict_las, "WSA": predict_wsa, "WAS": predict_was}
