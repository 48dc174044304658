"""The four predistorter architectures and their forward/backward passes.

All four share the sliding-window input of Eq.-style form
``[u_I(n), u_Q(n), ..., u_I(n-M), u_Q(n-M)]`` and a two-neuron linear output:

* ``R2TDNN``     - residual net: output adds the identity term [u_I(n), u_Q(n)].
* ``SVDEN``      - identity term replaced by a trainable bias-free 2x2 shortcut.
* ``HG-R2TDNN``  - R2TDNN with the operating-state vector appended to the input.
* ``HN-R2TDNN``  - R2TDNN whose output-layer weights and biases are produced
                   by a hypernetwork from the operating-state vector.

The operating-state vector is ``[BW/BW_max, P/P_max, P/P_max]`` with the
power ratio duplicated (power affects behavior more than bandwidth).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nets import LayerSpec, ParamLayout, init_params, nn_backward, nn_forward
from .signals import ComplexSignal

__all__ = [
    "MODEL_KINDS",
    "DpdModel",
    "state_vector",
    "build_model",
    "make_input_window",
    "window_matrix",
    "hyper_generate",
    "predistort_sample",
    "predistort_signal",
]

MODEL_KINDS = ("R2TDNN", "SVDEN", "HG-R2TDNN", "HN-R2TDNN")


def state_vector(bandwidth_hz: float, power_dbm: float,
                 bw_max_hz: float, p_max_dbm: float) -> np.ndarray:
    """Encode one operating state as [BW/BW_max, P/P_max, P/P_max]."""
    if bw_max_hz <= 0:
        raise ValueError("bw_max_hz must be positive")
    if p_max_dbm == 0:
        raise ValueError("p_max_dbm must be nonzero")
    p_ratio = power_dbm / p_max_dbm
    return np.array([bandwidth_hz / bw_max_hz, p_ratio, p_ratio])


@dataclass
class DpdModel:
    """One predistorter.  ``main_layers`` always includes the output layer
    spec; for HN-R2TDNN the output layer's parameters are not in
    ``main_params`` (they are generated by the hypernetwork)."""

    kind: str
    memory_length: int
    main_layers: tuple
    main_params: np.ndarray
    hyper_layers: tuple = None
    hyper_params: np.ndarray = None
    shortcut: np.ndarray = None
    bw_max_hz: float = None
    p_max_dbm: float = None

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        self.main_layers = tuple(self.main_layers)
        if self.kind == "HN-R2TDNN":
            if self.hyper_layers is None or self.hyper_params is None:
                raise ValueError("HN-R2TDNN requires a hypernetwork")
            self.hyper_layers = tuple(self.hyper_layers)
            self.hyper_layout = ParamLayout(self.hyper_layers)
            self.main_layout = ParamLayout(self.main_layers[:-1])
        else:
            self.hyper_layout = None
            self.main_layout = ParamLayout(self.main_layers)
        if self.kind == "SVDEN":
            if self.shortcut is None or np.shape(self.shortcut) != (2, 2):
                raise ValueError("SVDEN requires a 2x2 shortcut matrix")

    @property
    def window_dim(self) -> int:
        return 2 * self.memory_length + 2

    @property
    def needs_state(self) -> bool:
        return self.kind in ("HG-R2TDNN", "HN-R2TDNN")

    @property
    def param_count(self) -> int:
        n = len(self.main_params)
        if self.hyper_params is not None:
            n += len(self.hyper_params)
        if self.shortcut is not None:
            n += 4
        return n

    def pack_params(self) -> np.ndarray:
        parts = [self.main_params]
        if self.kind == "HN-R2TDNN":
            parts.append(self.hyper_params)
        if self.kind == "SVDEN":
            parts.append(self.shortcut.reshape(-1))
        return np.concatenate(parts)

    def set_packed_params(self, flat: np.ndarray) -> None:
        if len(flat) != self.param_count:
            raise ValueError("packed parameter length mismatch")
        n_main = len(self.main_params)
        self.main_params = flat[:n_main].copy()
        if self.kind == "HN-R2TDNN":
            self.hyper_params = flat[n_main:].copy()
        elif self.kind == "SVDEN":
            self.shortcut = flat[n_main:].reshape(2, 2).copy()


def build_model(kind: str, memory_length: int, hidden_dims,
                hyper_hidden_dims=None, seed: int = 0) -> DpdModel:
    """Construct an initialized predistorter.

    ``hidden_dims`` are the main network's hidden widths (input 2M+2 and the
    two-neuron linear output are implied; HG-R2TDNN's input gains 3 extra
    state entries).  ``hyper_hidden_dims`` (HN-R2TDNN only) are the
    hypernetwork's ReLU hidden widths; its input is the 3-entry state vector
    and its output dimension is 2*D_{R-1} + 2 (flattened output weights, then
    biases).
    """
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    hidden_dims = tuple(int(d) for d in hidden_dims)
    if memory_length < 0 or not hidden_dims:
        raise ValueError("memory_length must be >= 0 and hidden_dims non-empty")
    in_dim = 2 * memory_length + 2 + (3 if kind == "HG-R2TDNN" else 0)

    dims = (in_dim,) + hidden_dims + (2,)
    main_layers = tuple(
        LayerSpec(dims[i], dims[i + 1], "tanh" if i < len(dims) - 2 else "linear")
        for i in range(len(dims) - 1)
    )

    hyper_layers = None
    hyper_params = None
    if kind == "HN-R2TDNN":
        if not hyper_hidden_dims:
            raise ValueError("HN-R2TDNN requires hyper_hidden_dims")
        hyper_out = 2 * hidden_dims[-1] + 2
        hdims = (3,) + tuple(int(d) for d in hyper_hidden_dims) + (hyper_out,)
        hyper_layers = tuple(
            LayerSpec(hdims[i], hdims[i + 1], "relu" if i < len(hdims) - 2 else "linear")
            for i in range(len(hdims) - 1)
        )
        hyper_params = init_params(hyper_layers, [seed, 1])
        main_params = init_params(main_layers[:-1], [seed, 0])
    else:
        main_params = init_params(main_layers, [seed, 0])

    shortcut = np.eye(2) if kind == "SVDEN" else None
    return DpdModel(kind, memory_length, main_layers, main_params,
                    hyper_layers, hyper_params, shortcut)


def make_input_window(u, n: int, memory_length: int) -> np.ndarray:
    """Window [u_I(n), u_Q(n), ..., u_I(n-M), u_Q(n-M)] with zero history."""
    samples = u.samples if isinstance(u, ComplexSignal) else np.asarray(u)
    if not (0 <= n < len(samples)):
        raise IndexError(f"sample index {n} out of range")
    window = np.zeros(2 * memory_length + 2)
    for m in range(memory_length + 1):
        if n - m >= 0:
            window[2 * m] = samples[n - m].real
            window[2 * m + 1] = samples[n - m].imag
    return window


def window_matrix(samples: np.ndarray, memory_length: int) -> np.ndarray:
    """All sliding windows of a sequence as rows (zero-padded history)."""
    samples = np.asarray(samples)
    n = len(samples)
    out = np.empty((n, 2 * memory_length + 2))
    for m in range(memory_length + 1):
        shifted = np.concatenate([np.zeros(m, dtype=complex), samples[: n - m]])
        out[:, 2 * m] = shifted.real
        out[:, 2 * m + 1] = shifted.imag
    return out


def hyper_generate(model: DpdModel, c: np.ndarray):
    """Run the hypernetwork on a state vector; returns (W_R, b_R)."""
    if model.kind != "HN-R2TDNN":
        raise ValueError("hyper_generate requires an HN-R2TDNN model")
    out, _ = nn_forward(model.hyper_params, model.hyper_layout, np.asarray(c, dtype=float))
    d_hidden = model.main_layers[-1].in_dim
    w_r = out[: 2 * d_hidden].reshape(2, d_hidden)
    b_r = out[2 * d_hidden :]
    return w_r, b_r


def _forward(model: DpdModel, windows: np.ndarray, c=None):
    """Batch forward over window rows at a single operating state.

    Returns (predictions (B, 2), cache for `_backward`).
    """
    if model.needs_state and c is None:
        raise ValueError(f"{model.kind} requires a state vector")
    identity = windows[:, :2]
    if model.kind == "HN-R2TDNN":
        hyper_out, hyper_tape = nn_forward(
            model.hyper_params, model.hyper_layout, np.asarray(c, dtype=float)[None, :]
        )
        d_hidden = model.main_layers[-1].in_dim
        w_r = hyper_out[0, : 2 * d_hidden].reshape(2, d_hidden)
        b_r = hyper_out[0, 2 * d_hidden :]
        trunk_out, trunk_tape = nn_forward(model.main_params, model.main_layout, windows)
        pred = trunk_out @ w_r.T + b_r + identity
        return pred, ("hn", trunk_tape, hyper_tape, w_r, trunk_out, identity)
    if model.kind == "HG-R2TDNN":
        x = np.concatenate([windows, np.broadcast_to(c, (len(windows), 3))], axis=1)
        out, tape = nn_forward(model.main_params, model.main_layout, x)
        return out + identity, ("main", tape, identity)
    out, tape = nn_forward(model.main_params, model.main_layout, windows)
    if model.kind == "SVDEN":
        return out + identity @ model.shortcut.T, ("svden", tape, identity)
    return out + identity, ("main", tape, identity)


def _backward(model: DpdModel, cache, dout: np.ndarray) -> np.ndarray:
    """Gradient of sum(dout * pred) w.r.t. the packed parameter vector."""
    tag = cache[0]
    if tag == "hn":
        _, trunk_tape, hyper_tape, w_r, trunk_out, _ = cache
        g_wr = dout.T @ trunk_out
        g_br = dout.sum(axis=0)
        g_hyper_out = np.concatenate([g_wr.reshape(-1), g_br])[None, :]
        g_hyper = nn_backward(model.hyper_params, model.hyper_layout, hyper_tape, g_hyper_out)
        g_trunk = nn_backward(model.main_params, model.main_layout, trunk_tape, dout @ w_r)
        return np.concatenate([g_trunk, g_hyper])
    _, tape, identity = cache[:3]
    g_main = nn_backward(model.main_params, model.main_layout, tape, dout)
    if tag == "svden":
        g_s = dout.T @ identity
        return np.concatenate([g_main, g_s.reshape(-1)])
    return g_main


def predistort_sample(model: DpdModel, window: np.ndarray, c=None):
    """Predistort one sample from its input window; returns (s_I, s_Q)."""
    window = np.asarray(window, dtype=float)
    if window.shape != (model.window_dim,):
        raise ValueError(f"window must have length {model.window_dim}")
    pred, _ = _forward(model, window[None, :], c)
    return float(pred[0, 0]), float(pred[0, 1])


def predistort_signal(model: DpdModel, u: ComplexSignal, c=None) -> ComplexSignal:
    """Apply the predistorter at every sample with sliding windows."""
    windows = window_matrix(u.samples, model.memory_length)
    pred, _ = _forward(model, windows, c)
    return ComplexSignal(pred[:, 0] + 1j * pred[:, 1], u.sample_rate_hz)
