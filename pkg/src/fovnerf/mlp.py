"""Dense MLP with hand-written forward/backward and an Adam step.

The network is n_layers fully-connected ReLU layers of n_channels each
(the first maps the encoded input up to n_channels), followed by a linear
projection to output_dim with sigmoid activations on every output channel.

Weights are canonically float32; passing float64 parameters switches the
whole pipeline to 64-bit, which the finite-difference gradient checks use.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray


@dataclass(frozen=True)
class MlpConfig:
    n_layers: int
    n_channels: int
    activation: str = "relu"
    output_dim: int = 4

    def __post_init__(self) -> None:
        if self.n_layers < 1:
            raise ValueError("n_layers must be >= 1")
        if self.n_channels < 1:
            raise ValueError("n_channels must be >= 1")
        if self.activation != "relu":
            raise ValueError("only rectifier hidden activations are supported")

    def weight_shapes(self, enc_width: int) -> list[tuple[int, int]]:
        shapes = [(enc_width, self.n_channels)]
        shapes += [(self.n_channels, self.n_channels)] * (self.n_layers - 1)
        shapes.append((self.n_channels, self.output_dim))
        return shapes

    def param_count(self, enc_width: int, include_biases: bool = True) -> int:
        count = sum(a * b for a, b in self.weight_shapes(enc_width))
        if include_biases:
            count += self.n_layers * self.n_channels + self.output_dim
        return count


# Parameters are a flat list of alternating weight/bias arrays:
# [W0, b0, W1, b1, ..., Wout, bout].
Params = list[np.ndarray]


def init_params(
    cfg: MlpConfig, enc_width: int, rng: np.random.Generator, dtype=np.float32
) -> Params:
    """He-normal weights, zero biases."""
    params: Params = []
    for n_in, n_out in cfg.weight_shapes(enc_width):
        w = rng.standard_normal((n_in, n_out)) * np.sqrt(2.0 / n_in)
        params.append(w.astype(dtype))
        params.append(np.zeros(n_out, dtype=dtype))
    return params


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def forward(
    params: Params, x: np.ndarray, want_cache: bool = False
) -> tuple[np.ndarray, list[np.ndarray] | None]:
    """Evaluate the network on a (B, enc_width) batch; outputs lie in (0, 1)."""
    dtype = params[0].dtype
    h = np.ascontiguousarray(x, dtype=dtype)
    cache: list[np.ndarray] | None = [h] if want_cache else None
    n_linear = len(params) // 2
    for i in range(n_linear - 1):
        h = h @ params[2 * i] + params[2 * i + 1]
        np.maximum(h, 0, out=h)
        if cache is not None:
            cache.append(h)
    z = h @ params[-2] + params[-1]
    out = sigmoid(z)
    if cache is not None:
        cache.append(out)
    return out, cache


def backward(params: Params, cache: list[np.ndarray], dout: np.ndarray) -> Params:
    """Gradients of a scalar loss wrt params, given dL/d(output) and the forward cache."""
    out = cache[-1]
    dz = dout * out * (1.0 - out)  # sigmoid'
    grads: Params = [None] * len(params)  # type: ignore[list-item]
    n_linear = len(params) // 2
    for i in range(n_linear - 1, -1, -1):
        h_in = cache[i]
        grads[2 * i] = h_in.T @ dz
        grads[2 * i + 1] = dz.sum(axis=0)
        if i > 0:
            dz = (dz @ params[2 * i].T) * (h_in > 0)
    return grads


@dataclass
class AdamState:
    """First/second moment accumulators for Adam."""

    m: Params
    v: Params
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @staticmethod
    def for_params(params: Params) -> "AdamState":
        return AdamState(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
        )


def adam_step(params: Params, grads: Params, state: AdamState, lr: float) -> None:
    """In-place Adam update. lr == 0 leaves parameters bit-identical."""
    if lr == 0.0:
        return
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1 ** state.step
    bias2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        g = g.astype(p.dtype, copy=False)
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p -= (lr / bias1) * m / (np.sqrt(v / bias2) + state.eps)
