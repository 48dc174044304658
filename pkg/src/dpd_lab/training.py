"""Indirect-learning training: per-state datasets from the simulated
transmitter, state-parallel minibatch loading, and post-inverse training.

The post-inverse maps windows of the gain-normalized transmitter output back
to the transmitter input; deployed in front of the chain it acts as the
predistorter.  Every minibatch draws the same number of samples from every
operating state so no state is forgotten during training.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .predistorters import DpdModel, _backward, _forward, state_vector, window_matrix
from .nets import OptimizerState, adam_step
from .signals import ComplexSignal, WaveformSpec, dbm_to_rms, derive_seed, generate_ofdm
from .transmitter import IqPaChain, chain_forward

__all__ = [
    "StateGrid",
    "StateData",
    "Dataset",
    "TrainConfig",
    "TrainingDiverged",
    "build_dataset",
    "parallel_batches",
    "loss_state",
    "train_ila",
    "deploy_and_measure",
]


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class StateGrid:
    """Operating states as (bandwidth_hz, power_dbm) pairs, indexed from 1."""

    states: tuple

    def __post_init__(self):
        states = tuple((float(bw), float(p)) for bw, p in self.states)
        object.__setattr__(self, "states", states)
        if not states:
            raise ValueError("grid must contain at least one state")
        if any(not np.isfinite(bw) or not np.isfinite(p) for bw, p in states):
            raise ValueError("grid entries must be finite")
        if max(p for _, p in states) == 0:
            raise ValueError("maximum power must be nonzero for state encoding")

    @classmethod
    def from_lists(cls, bandwidths_hz, powers_dbm) -> "StateGrid":
        return cls(tuple((bw, p) for bw in bandwidths_hz for p in powers_dbm))

    def __len__(self) -> int:
        return len(self.states)

    @property
    def indices(self):
        return tuple(range(1, len(self.states) + 1))

    @property
    def bw_max_hz(self) -> float:
        return max(bw for bw, _ in self.states)

    @property
    def p_max_dbm(self) -> float:
        return max(p for _, p in self.states)

    def state(self, index: int):
        if not (1 <= index <= len(self.states)):
            raise KeyError(f"state index {index} out of range 1..{len(self.states)}")
        return self.states[index - 1]

    def state_vector(self, index: int) -> np.ndarray:
        bw, p = self.state(index)
        return state_vector(bw, p, self.bw_max_hz, self.p_max_dbm)


@dataclass
class StateData:
    """One state's training material: gain-normalized chain output as input,
    the chain's own input as target, split into a train prefix and test
    suffix whose windows never straddle the boundary."""

    inputs: np.ndarray
    targets: np.ndarray
    gain: complex
    c: np.ndarray
    split: int

    @property
    def train_inputs(self) -> np.ndarray:
        return self.inputs[: self.split]

    @property
    def train_targets(self) -> np.ndarray:
        return self.targets[: self.split]

    @property
    def test_inputs(self) -> np.ndarray:
        return self.inputs[self.split :]

    @property
    def test_targets(self) -> np.ndarray:
        return self.targets[self.split :]


@dataclass
class Dataset:
    grid: StateGrid
    states: dict
    sample_rate_hz: float
    seed: int

    @property
    def state_indices(self):
        return tuple(sorted(self.states))

    def subset(self, indices) -> "Dataset":
        missing = [i for i in indices if i not in self.states]
        if missing:
            raise KeyError(f"states {missing} not present in dataset")
        return Dataset(self.grid, {i: self.states[i] for i in indices},
                       self.sample_rate_hz, self.seed)


@dataclass
class TrainConfig:
    """Optimization settings.  ``batch_size`` is the total minibatch size and
    is rounded up to a multiple of the number of states."""

    epochs: int = 200
    batch_size: int = 900
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr_decay_factor: float = 0.5
    lr_decay_milestones: tuple = (0.6, 0.85)
    ila_iterations: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("epochs and batch_size must be positive")
        if self.ila_iterations < 1:
            raise ValueError("ila_iterations must be >= 1")

    def lr_at(self, epoch: int) -> float:
        lr = self.learning_rate
        for frac in self.lr_decay_milestones:
            if epoch >= int(frac * self.epochs):
                lr *= self.lr_decay_factor
        return lr


def _ls_gain(reference: np.ndarray, measured: np.ndarray) -> complex:
    """Least-squares complex gain of measured onto reference."""
    denom = np.vdot(reference, reference)
    if denom == 0:
        raise ValueError("reference has zero energy")
    return complex(np.vdot(reference, measured) / denom)


def build_dataset(
    chain: IqPaChain,
    grid: StateGrid,
    q: int,
    seed: int,
    sample_rate_hz: float = 200e6,
    modulation_order: int = 16,
    ref_power_dbm: float = -19.0,
    ref_rms: float = 0.5,
    train_fraction: float = 0.75,
    fft_size: int = 2048,
    occupancy: float = 0.92,
    transition_len: int = 256,
) -> Dataset:
    """Capture (input, output) pairs from the chain at every grid state.

    For each state, a fresh signal s is generated at the state's bandwidth
    and power, the raw chain output y is captured, and the least-squares
    gain G = sum(y s*) / sum(|s|^2) is removed: the training input is y/G
    and the target is s.
    """
    if q <= 0:
        raise ValueError("q must be positive")
    missing = [i for i in grid.indices if i not in chain.pa_per_state]
    if missing:
        raise KeyError(f"chain lacks PA entries for states {missing}")
    states = {}
    for i in grid.indices:
        bw, p = grid.state(i)
        spec = WaveformSpec(bw, q, dbm_to_rms(p, ref_power_dbm, ref_rms),
                            seed=derive_seed(seed, 1, i), modulation_order=modulation_order)
        s = generate_ofdm(spec, sample_rate_hz, fft_size, occupancy, transition_len)
        y = chain_forward(s, chain, i)
        gain = _ls_gain(s.samples, y.samples)
        if abs(gain) < 1e-9:
            raise ValueError(f"state {i}: degenerate chain gain {gain}")
        states[i] = StateData(
            inputs=y.samples / gain,
            targets=s.samples.copy(),
            gain=gain,
            c=grid.state_vector(i),
            split=int(train_fraction * q),
        )
    return Dataset(grid, states, sample_rate_hz, seed)


def parallel_batches(dataset: Dataset, batch_size: int, seed) -> list:
    """One epoch of state-parallel minibatches.

    Every batch maps state index -> training-sample indices, with exactly
    ``batch_size / L`` samples per state (the final batch may be smaller but
    stays state-balanced).  Per-state order is a seeded permutation; every
    training sample of every state appears exactly once.
    """
    indices = dataset.state_indices
    n_states = len(indices)
    if batch_size < n_states:
        raise ValueError(f"batch_size {batch_size} smaller than state count {n_states}")
    per_state = -(-batch_size // n_states)
    q_train = min(dataset.states[i].split for i in indices)
    parts = [int(p) for p in np.atleast_1d(seed)]
    perms = {
        i: np.random.default_rng(parts + [i]).permutation(q_train)
        for i in indices
    }
    batches = []
    for start in range(0, q_train, per_state):
        batches.append({i: perms[i][start : start + per_state] for i in indices})
    return batches


def loss_state(model: DpdModel, dataset: Dataset, state_index: int, sample_indices) -> float:
    """Sum of squared complex errors |s(n) - s~(n)|^2 over training samples."""
    data = dataset.states[state_index]
    idx = np.asarray(sample_indices, dtype=int)
    if len(idx) and (idx.min() < 0 or idx.max() >= data.split):
        raise IndexError("sample index outside the training split")
    windows = window_matrix(data.train_inputs, model.memory_length)[idx]
    pred, _ = _forward(model, windows, data.c if model.needs_state else None)
    err_i = pred[:, 0] - data.train_targets[idx].real
    err_q = pred[:, 1] - data.train_targets[idx].imag
    return float(np.sum(err_i**2 + err_q**2))


def _epoch_pass(model, packed, windows_by_state, targets_by_state, cvec_by_state,
                batches, opt_state, lr):
    """Run one epoch of minibatch updates; returns packed params, optimizer
    state, and per-state accumulated losses."""
    indices = sorted(windows_by_state)
    per_state_loss = {i: 0.0 for i in indices}
    opt_state = opt_state.with_lr(lr)
    for batch in batches:
        grad = np.zeros_like(packed)
        model.set_packed_params(packed)
        for i in indices:
            rows = batch[i]
            if len(rows) == 0:
                continue
            x = windows_by_state[i][rows]
            t = targets_by_state[i][rows]
            pred, cache = _forward(model, x, cvec_by_state[i])
            err = pred - t
            per_state_loss[i] += float(np.sum(err * err))
            grad += _backward(model, cache, 2.0 * err)
        packed, opt_state = adam_step(packed, grad, opt_state)
    return packed, opt_state, per_state_loss


def train_ila(model: DpdModel, dataset: Dataset, cfg: TrainConfig, chain: IqPaChain = None):
    """Train the model as a post-inverse of the chain via indirect learning.

    Minimizes the summed per-state losses by state-parallel minibatch
    gradient descent over all model parameters.  Returns the trained model
    and a loss history (one row per epoch: total plus per-state losses).
    ILA iterations beyond the first re-capture the chain output with the
    current predistorter deployed and retrain; they require ``chain``.
    """
    if cfg.ila_iterations > 1 and chain is None:
        raise ValueError("ila_iterations > 1 requires the chain for re-capture")
    indices = sorted(dataset.state_indices)
    model.bw_max_hz = dataset.grid.bw_max_hz
    model.p_max_dbm = dataset.grid.p_max_dbm
    cvec = {i: (dataset.states[i].c if model.needs_state else None) for i in indices}

    history = []
    inputs = {i: dataset.states[i].train_inputs for i in indices}
    targets_sig = {i: dataset.states[i].train_targets for i in indices}

    for iteration in range(cfg.ila_iterations):
        if iteration > 0:
            inputs, targets_sig = _recapture(model, dataset, chain, indices, cvec)
        windows = {i: window_matrix(inputs[i], model.memory_length) for i in indices}
        targets = {
            i: np.stack([targets_sig[i].real, targets_sig[i].imag], axis=1) for i in indices
        }
        packed = model.pack_params()
        opt_state = OptimizerState.fresh(len(packed), cfg.learning_rate,
                                         cfg.beta1, cfg.beta2, cfg.eps)
        for epoch in range(cfg.epochs):
            batches = parallel_batches(dataset, cfg.batch_size,
                                       [cfg.seed, iteration, epoch])
            packed, opt_state, per_state = _epoch_pass(
                model, packed, windows, targets, cvec, batches, opt_state,
                cfg.lr_at(epoch))
            total = sum(per_state.values())
            if not np.isfinite(total):
                raise TrainingDiverged(
                    f"loss became non-finite at iteration {iteration}, epoch {epoch}")
            history.append({"iteration": iteration, "epoch": epoch,
                            "total": total, "per_state": per_state})
        model.set_packed_params(packed)
    return model, history


def _recapture(model, dataset, chain, indices, cvec):
    """Drive the chain through the current predistorter and rebuild pairs."""
    inputs, targets = {}, {}
    for i in indices:
        s = dataset.states[i].train_targets
        x = _predistort_samples(model, s, cvec[i], dataset.sample_rate_hz)
        y = chain_forward(ComplexSignal(x, dataset.sample_rate_hz), chain, i)
        gain = _ls_gain(x, y.samples)
        inputs[i] = y.samples / gain
        targets[i] = x
    return inputs, targets


def _predistort_samples(model, samples, c, sample_rate_hz):
    windows = window_matrix(samples, model.memory_length)
    pred, _ = _forward(model, windows, c)
    return pred[:, 0] + 1j * pred[:, 1]


def deploy_and_measure(chain: IqPaChain, model: DpdModel, grid: StateGrid,
                       test_signals: dict) -> dict:
    """Deploy the predistorter and capture linearized outputs per state.

    ``test_signals`` maps state index -> fresh ComplexSignal.  Returns state
    index -> (u, y~) where y~ = chain(predistort(u)) at that state.
    """
    results = {}
    for i, u in sorted(test_signals.items()):
        if i not in chain.pa_per_state:
            raise KeyError(f"unknown state index {i}")
        c = grid.state_vector(i) if model.needs_state else None
        x = _predistort_samples(model, u.samples, c, u.sample_rate_hz)
        y = chain_forward(ComplexSignal(x, u.sample_rate_hz), chain, i)
        results[i] = (u, y)
    return results
