"""Minimal dense-network engine: forward pass, exact reverse-mode gradients,
and an adaptive-moment optimizer, all over flat double-precision parameter
vectors.

Parameters of a layer stack live in one flat array; ``ParamLayout`` maps each
layer to its weight-matrix and bias slices.  ``nn_forward`` accepts a single
input vector or a batch (rows) and records the activations needed by
``nn_backward``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "LayerSpec",
    "ParamLayout",
    "OptimizerState",
    "init_params",
    "nn_forward",
    "nn_backward",
    "adam_step",
]

_ACTIVATIONS = ("tanh", "relu", "linear")


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str = "tanh"

    def __post_init__(self):
        if self.in_dim <= 0 or self.out_dim <= 0:
            raise ValueError("layer dimensions must be positive")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"activation must be one of {_ACTIVATIONS}")

    @property
    def size(self) -> int:
        return self.out_dim * self.in_dim + self.out_dim


class ParamLayout:
    """Bijective map from a layer stack to slices of one flat parameter vector.

    Weights are stored row-major as (out_dim, in_dim), followed by the bias,
    layer by layer.
    """

    def __init__(self, layers):
        layers = tuple(layers)
        if not layers:
            raise ValueError("at least one layer required")
        for prev, cur in zip(layers, layers[1:]):
            if prev.out_dim != cur.in_dim:
                raise ValueError(
                    f"layer chain mismatch: {prev.out_dim} -> {cur.in_dim}"
                )
        self.layers = layers
        self.slices = []
        offset = 0
        for spec in layers:
            w_len = spec.out_dim * spec.in_dim
            self.slices.append((slice(offset, offset + w_len),
                                slice(offset + w_len, offset + w_len + spec.out_dim)))
            offset += spec.size
        self.total = offset

    def weight(self, params: np.ndarray, r: int) -> np.ndarray:
        spec = self.layers[r]
        return params[self.slices[r][0]].reshape(spec.out_dim, spec.in_dim)

    def bias(self, params: np.ndarray, r: int) -> np.ndarray:
        return params[self.slices[r][1]]


def init_params(layers, seed) -> np.ndarray:
    """Glorot-style initialization: weights uniform in +/- 1/sqrt(fan_in), biases zero."""
    layout = ParamLayout(layers)
    rng = np.random.default_rng(seed)
    params = np.zeros(layout.total)
    for r, spec in enumerate(layout.layers):
        bound = 1.0 / np.sqrt(spec.in_dim)
        params[layout.slices[r][0]] = rng.uniform(-bound, bound, spec.out_dim * spec.in_dim)
    return params


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "tanh":
        return np.tanh(z)
    if activation == "relu":
        return np.maximum(z, 0.0)
    return z


def _activation_grad(u: np.ndarray, activation: str) -> np.ndarray:
    # derivative expressed through the stored activation value
    if activation == "tanh":
        return 1.0 - u * u
    if activation == "relu":
        return (u > 0).astype(float)
    return np.ones_like(u)


def nn_forward(params: np.ndarray, layers, x: np.ndarray):
    """Evaluate the layer stack on ``x`` ((D,) vector or (B, D) batch).

    Returns ``(output, tape)`` where the tape holds the input and every
    layer's activation for the backward pass.
    """
    layout = layers if isinstance(layers, ParamLayout) else ParamLayout(layers)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    a = x[None, :] if single else x
    if a.shape[1] != layout.layers[0].in_dim:
        raise ValueError(
            f"input dimension {a.shape[1]} != layer in_dim {layout.layers[0].in_dim}"
        )
    tape = [a]
    for r, spec in enumerate(layout.layers):
        z = a @ layout.weight(params, r).T + layout.bias(params, r)
        a = _activate(z, spec.activation)
        tape.append(a)
    return (a[0] if single else a), tape


def nn_backward(params: np.ndarray, layers, tape, output_grad: np.ndarray) -> np.ndarray:
    """Exact reverse-mode gradient of ``output_grad . output`` w.r.t. params.

    ``output_grad`` is the gradient at the final activation (same shape as
    the forward output); the returned vector matches the params layout.
    """
    layout = layers if isinstance(layers, ParamLayout) else ParamLayout(layers)
    if len(tape) != len(layout.layers) + 1:
        raise ValueError("tape does not match the layer stack")
    g = np.asarray(output_grad, dtype=float)
    if g.ndim == 1:
        g = g[None, :]
    if tape[0].shape[0] != g.shape[0] or tape[-1].shape[1] != g.shape[1]:
        raise ValueError("output_grad shape inconsistent with tape")
    grad = np.zeros_like(params)
    delta = g * _activation_grad(tape[-1], layout.layers[-1].activation)
    for r in range(len(layout.layers) - 1, -1, -1):
        w_sl, b_sl = layout.slices[r]
        grad[w_sl] = (delta.T @ tape[r]).reshape(-1)
        grad[b_sl] = delta.sum(axis=0)
        if r > 0:
            delta = (delta @ layout.weight(params, r)) * _activation_grad(
                tape[r], layout.layers[r - 1].activation
            )
    return grad


@dataclass(frozen=True)
class OptimizerState:
    """Adaptive-moment state; moments start at zero, step at 0."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, n_params: int, lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> "OptimizerState":
        return cls(np.zeros(n_params), np.zeros(n_params), 0, lr, beta1, beta2, eps)

    def with_lr(self, lr: float) -> "OptimizerState":
        return replace(self, lr=lr)


def adam_step(params: np.ndarray, grad: np.ndarray, state: OptimizerState):
    """One bias-corrected adaptive-moment update; returns (params', state')."""
    if grad.shape != params.shape:
        raise ValueError("gradient length does not match parameters")
    t = state.step + 1
    m = state.beta1 * state.m + (1 - state.beta1) * grad
    v = state.beta2 * state.v + (1 - state.beta2) * grad * grad
    m_hat = m / (1 - state.beta1 ** t)
    v_hat = v / (1 - state.beta2 ** t)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    if not np.all(np.isfinite(new_params)):
        raise FloatingPointError("non-finite parameters after optimizer step")
    return new_params, replace(state, m=m, v=v, step=t)
