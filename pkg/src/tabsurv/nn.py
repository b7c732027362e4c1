"""Dense neural-network substrate with hand-written backward passes.

Every layer is a pair of functions: ``*_forward`` returns the output and a
cache, ``*_backward`` consumes the upstream gradient and that cache.  All
arrays are float64.  Linear layers accept a leading member axis so one code
path serves both a single MLP (``k = 1``) and a parallel ensemble.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

SELU_LAMBDA = 1.0507009873554804934193349852946
SELU_ALPHA = 1.6732632423543772848170429916717
LAYER_NORM_EPS = 1e-5
ACTIVATIONS = ("relu", "silu", "selu")


class ParameterStore:
    """Named parameter arrays with gradient buffers of identical shape."""

    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        self.rng = np.random.default_rng(self.seed)
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def add(self, name: str, value) -> np.ndarray:
        if name in self.params:
            raise KeyError(f"parameter {name!r} already registered")
        arr = np.array(value, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"parameter {name!r} has non-finite values")
        self.params[name] = arr
        self.grads[name] = np.zeros_like(arr)
        return arr

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self):
        return iter(self.params)

    def names(self) -> list[str]:
        return list(self.params)

    def accumulate(self, name: str, grad: np.ndarray) -> None:
        buf = self.grads[name]
        if grad.shape != buf.shape:
            raise ValueError(f"gradient shape {grad.shape} != {buf.shape} for {name!r}")
        buf += grad

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g.fill(0.0)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    def restore(self, snapshot: dict[str, np.ndarray]) -> None:
        for k, v in snapshot.items():
            self.params[k][...] = v


# -- linear -----------------------------------------------------------------


def linear_forward(x: np.ndarray, W: np.ndarray, bias: np.ndarray):
    """``y = x @ W + bias``.

    Shapes: ``x (..., b, in)``, ``W (..., in, out)``, ``bias (..., out)``.
    Leading axes broadcast, so an ensemble stores ``W`` as ``(k, in, out)``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != W.shape[-2]:
        raise ValueError(f"linear: input width {x.shape[-1]} != weight rows {W.shape[-2]}")
    if bias.shape[-1] != W.shape[-1]:
        raise ValueError(f"linear: bias width {bias.shape[-1]} != weight cols {W.shape[-1]}")
    y = np.matmul(x, W) + bias[..., None, :]
    return y, (x, W)


def linear_backward(grad_out: np.ndarray, cache):
    x, W = cache
    expected = np.broadcast_shapes(x.shape[:-1], W.shape[:-2] + (1,)) + (W.shape[-1],)
    if grad_out.shape != expected:
        raise ValueError(f"linear backward: grad shape {grad_out.shape} != {expected}")
    grad_x = np.matmul(grad_out, np.swapaxes(W, -1, -2))
    xb = np.broadcast_to(x, grad_out.shape[:-1] + (x.shape[-1],))
    grad_W = np.matmul(np.swapaxes(xb, -1, -2), grad_out)
    grad_bias = grad_out.sum(axis=-2)
    # reduce over axes that were broadcast in the forward pass
    while grad_W.ndim > W.ndim:
        grad_W = grad_W.sum(axis=0)
        grad_bias = grad_bias.sum(axis=0)
    if grad_x.shape != x.shape:
        grad_x = grad_x.reshape((-1,) + x.shape).sum(axis=0)
    return grad_x, grad_W, grad_bias


# -- activations ------------------------------------------------------------


def activation_forward(kind: str, x: np.ndarray):
    if kind == "relu":
        y = np.maximum(x, 0.0)
    elif kind == "silu":
        y = x * expit(x)
    elif kind == "selu":
        y = SELU_LAMBDA * np.where(x > 0, x, SELU_ALPHA * np.expm1(np.minimum(x, 0.0)))
    else:
        raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")
    return y, (kind, x)


def activation_backward(grad_out: np.ndarray, cache) -> np.ndarray:
    kind, x = cache
    if kind == "relu":
        # subgradient at 0 is 0
        return grad_out * (x > 0)
    if kind == "silu":
        s = expit(x)
        return grad_out * (s + x * s * (1.0 - s))
    if kind == "selu":
        d = np.where(x > 0, SELU_LAMBDA, SELU_LAMBDA * SELU_ALPHA * np.exp(np.minimum(x, 0.0)))
        return grad_out * d
    raise ValueError(f"unknown activation {kind!r}")


def activation(kind: str, x) -> np.ndarray:
    return activation_forward(kind, np.asarray(x, dtype=np.float64))[0]


# -- layer norm / dropout ---------------------------------------------------


def layer_norm_forward(x: np.ndarray, gain: np.ndarray, shift: np.ndarray, eps: float = LAYER_NORM_EPS):
    """Normalize over the last axis, then apply ``gain * xhat + shift``."""
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv_std
    y = xhat * gain[..., None, :] + shift[..., None, :]
    return y, (xhat, inv_std, gain)


def layer_norm_backward(grad_out: np.ndarray, cache):
    xhat, inv_std, gain = cache
    n = xhat.shape[-1]
    grad_gain = (grad_out * xhat).sum(axis=-2)
    grad_shift = grad_out.sum(axis=-2)
    dxhat = grad_out * gain[..., None, :]
    grad_x = (inv_std / n) * (
        n * dxhat
        - dxhat.sum(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
    )
    return grad_x, grad_gain, grad_shift


def dropout_forward(x: np.ndarray, rate: float, training: bool, rng: np.random.Generator | None):
    """Inverted dropout; identity in eval mode or when ``rate == 0``."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, None
    if rng is None:
        raise ValueError("dropout in training mode needs a random generator")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(grad_out: np.ndarray, mask) -> np.ndarray:
    return grad_out if mask is None else grad_out * mask


# -- output maps ------------------------------------------------------------


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(grad_p: np.ndarray, p: np.ndarray) -> np.ndarray:
    return p * (grad_p - (grad_p * p).sum(axis=-1, keepdims=True))


def softplus(x) -> np.ndarray:
    # logaddexp switches to the linear branch for large x
    return np.logaddexp(0.0, np.asarray(x, dtype=np.float64))


def softplus_backward(grad_out: np.ndarray, x: np.ndarray) -> np.ndarray:
    return grad_out * expit(x)


def inverse_softplus(y: float) -> float:
    return float(y + np.log(-np.expm1(-y)))


# -- optimizer --------------------------------------------------------------


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: ParameterStore, state: AdamState) -> None:
    """One bias-corrected Adam update; gradients are zeroed afterwards."""
    for name, g in params.grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in parameter {name!r}")
    state.step += 1
    c1 = 1.0 - state.beta1**state.step
    c2 = 1.0 - state.beta2**state.step
    for name, p in params.params.items():
        g = params.grads[name]
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    params.zero_grad()


# -- finite differences -----------------------------------------------------


@dataclass
class GradCheckReport:
    max_rel_error: float
    n_checked: int
    tol: float
    worst: tuple[str, tuple[int, ...]] | None

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol


def gradient_check(loss_fn, params: ParameterStore, h: float = 1e-5, tol: float = 1e-4,
                   max_coords: int = 200, seed: int = 0, floor: float = 1e-6) -> GradCheckReport:
    """Compare analytic gradients against central differences.

    ``loss_fn()`` must return the scalar loss and fill ``params.grads``
    (starting from zero).  Relative error per coordinate is
    ``|a - n| / max(|a|, |n|, floor)``.
    """
    params.zero_grad()
    loss_fn()
    analytic = {k: g.copy() for k, g in params.grads.items()}
    coords = [(name, idx) for name, p in params.params.items() for idx in np.ndindex(p.shape)]
    rng = np.random.default_rng(seed)
    if len(coords) > max_coords:
        pick = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[i] for i in sorted(pick)]
    worst, worst_err = None, 0.0
    for name, idx in coords:
        p = params.params[name]
        orig = p[idx]
        p[idx] = orig + h
        params.zero_grad()
        up = loss_fn()
        p[idx] = orig - h
        params.zero_grad()
        down = loss_fn()
        p[idx] = orig
        num = (up - down) / (2.0 * h)
        a = analytic[name][idx]
        err = abs(a - num) / max(abs(a), abs(num), floor)
        if err > worst_err:
            worst, worst_err = (name, idx), err
    params.zero_grad()
    for k, g in analytic.items():
        params.grads[k][...] = g
    return GradCheckReport(worst_err, len(coords), tol, worst)
