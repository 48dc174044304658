"""Simulated device-under-test: non-ideal IQ modulator cascaded with a memory PA.

The IQ modulator applies gain/phase mismatch plus per-branch FIR filtering,
expressed through the two complex kernels

    K1(n) = (h_I(n) + g e^{j theta} h_Q(n)) / 2
    K2(n) = (h_I(n) - g e^{j theta} h_Q(n)) / 2

so that x(n) = (s * K1)(n) + (s^* * K2)(n).  The PA is a memory polynomial
over odd orders with zero-padded history.  Each operating state gets its own
PA coefficient set, derived from one base set by a seeded sign perturbation,
so the transmitter genuinely changes behavior from state to state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .signals import ComplexSignal

__all__ = [
    "IqImbalanceConfig",
    "PaModel",
    "IqPaChain",
    "iq_kernels",
    "iq_modulate",
    "pa_forward",
    "chain_forward",
    "perturbed_pa",
]


@dataclass(frozen=True)
class IqImbalanceConfig:
    """Gain, phase and branch-filter mismatch of the IQ modulator.

    ``gain_mismatch`` is dimensionless (> 0), ``phase_mismatch_rad`` in
    radians.  ``h_i``/``h_q`` are real FIR taps; the ideal configuration is
    gain 1, phase 0, both filters the unit impulse.
    """

    gain_mismatch: float
    phase_mismatch_rad: float
    h_i: np.ndarray
    h_q: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "h_i", np.asarray(self.h_i, dtype=float))
        object.__setattr__(self, "h_q", np.asarray(self.h_q, dtype=float))
        if self.gain_mismatch <= 0:
            raise ValueError("gain_mismatch must be positive")
        for name, taps in (("h_i", self.h_i), ("h_q", self.h_q)):
            if taps.ndim != 1 or taps.size == 0:
                raise ValueError(f"{name} must be a non-empty tap vector")
            if not np.all(np.isfinite(taps)):
                raise ValueError(f"{name} contains non-finite taps")
            if not np.any(taps != 0):
                raise ValueError(f"{name} must have at least one nonzero tap")

    @classmethod
    def ideal(cls) -> "IqImbalanceConfig":
        return cls(1.0, 0.0, np.array([1.0]), np.array([1.0]))


@dataclass(frozen=True)
class PaModel:
    """Memory-polynomial PA: y(n) = sum_k sum_m a[k][m] x(n-m) |x(n-m)|^(k-1).

    ``coefficients`` maps odd nonlinearity order k to a complex tap vector
    over memory lags m = 0..M_PA.  Orders may be omitted (treated as zero).
    """

    coefficients: dict

    def __post_init__(self):
        coeffs = {}
        for k, taps in self.coefficients.items():
            k = int(k)
            if k < 1 or k % 2 == 0:
                raise ValueError(f"nonlinearity orders must be odd and >= 1, got {k}")
            taps = np.asarray(taps, dtype=complex)
            if taps.ndim != 1 or taps.size == 0:
                raise ValueError(f"order-{k} taps must be a non-empty vector")
            if not np.all(np.isfinite(taps)):
                raise ValueError(f"order-{k} taps contain non-finite values")
            coeffs[k] = taps
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def memory_length(self) -> int:
        return max(len(t) for t in self.coefficients.values()) - 1

    def has_linear_gain(self) -> bool:
        taps = self.coefficients.get(1)
        return taps is not None and taps[0] != 0

    @classmethod
    def identity(cls) -> "PaModel":
        return cls({1: np.array([1.0 + 0.0j])})


@dataclass(frozen=True)
class IqPaChain:
    """IQ modulator + per-state PA, optionally with an additive noise hook.

    ``pa_per_state`` maps state index to its PaModel.  ``noise_std`` is the
    total standard deviation of complex white noise added to the PA output
    (0 disables it); the realization is keyed by ``(noise_seed, state,
    length)`` so repeated calls are bit-identical.
    """

    iq: IqImbalanceConfig
    pa_per_state: dict
    noise_std: float = 0.0
    noise_seed: int = 0

    def __post_init__(self):
        for i, pa in self.pa_per_state.items():
            if not pa.has_linear_gain():
                raise ValueError(f"state {i}: PA must have a nonzero linear gain a[1][0]")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")

    @property
    def total_memory(self) -> int:
        pa_mem = max(pa.memory_length for pa in self.pa_per_state.values())
        return len(self.iq.h_i) - 1 + pa_mem

    @property
    def state_indices(self):
        return sorted(self.pa_per_state)


def iq_kernels(cfg: IqImbalanceConfig) -> tuple[np.ndarray, np.ndarray]:
    """Return the (K1, K2) kernels of the imbalanced modulator, equal length."""
    t = max(len(cfg.h_i), len(cfg.h_q))
    h_i = np.concatenate([cfg.h_i, np.zeros(t - len(cfg.h_i))])
    h_q = np.concatenate([cfg.h_q, np.zeros(t - len(cfg.h_q))])
    ge = cfg.gain_mismatch * np.exp(1j * cfg.phase_mismatch_rad)
    k1 = 0.5 * (h_i + ge * h_q)
    k2 = 0.5 * (h_i - ge * h_q)
    return k1, k2


def _causal_convolve(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    return np.convolve(x, taps)[: len(x)]


def iq_modulate(s: ComplexSignal, cfg: IqImbalanceConfig) -> ComplexSignal:
    """Apply the non-ideal IQ modulator: x = s * K1 + conj(s) * K2 (causal)."""
    k1, k2 = iq_kernels(cfg)
    x = _causal_convolve(s.samples, k1) + _causal_convolve(np.conj(s.samples), k2)
    return ComplexSignal(x, s.sample_rate_hz)


def pa_forward(x: ComplexSignal, pa: PaModel) -> ComplexSignal:
    """Run the memory-polynomial PA with zero-padded history."""
    xs = x.samples
    y = np.zeros_like(xs)
    for k, taps in sorted(pa.coefficients.items()):
        for m, coeff in enumerate(taps):
            if coeff == 0:
                continue
            shifted = np.concatenate([np.zeros(m, dtype=complex), xs[: len(xs) - m]])
            y = y + coeff * shifted * np.abs(shifted) ** (k - 1)
    return ComplexSignal(y, x.sample_rate_hz)


def chain_forward(s: ComplexSignal, chain: IqPaChain, state_index: int) -> ComplexSignal:
    """Drive the full transmitter at one operating state."""
    if state_index not in chain.pa_per_state:
        raise KeyError(f"unknown state index {state_index}")
    y = pa_forward(iq_modulate(s, chain.iq), chain.pa_per_state[state_index])
    if chain.noise_std > 0:
        rng = np.random.default_rng([chain.noise_seed, state_index, len(y)])
        noise = rng.standard_normal(len(y)) + 1j * rng.standard_normal(len(y))
        y = ComplexSignal(y.samples + chain.noise_std * noise / np.sqrt(2.0), y.sample_rate_hz)
    return y


def perturbed_pa(
    base: PaModel,
    state_index: int,
    seed: int,
    nonlinear_mag: float = 0.10,
    nonlinear_phase_rad: float = np.deg2rad(5.0),
    linear_mag: float = 0.25,
    linear_phase_rad: float = np.deg2rad(10.0),
) -> PaModel:
    """Derive one state's PA from the base coefficient set.

    Every tap is multiplied by ``(1 +/- mag) * exp(+/- j*phase)`` with signs
    drawn from a generator seeded by ``(seed, state_index, order)``.
    Nonlinear orders use the ``nonlinear_*`` strengths; linear memory taps
    (order 1, lag >= 1) use the ``linear_*`` strengths, and the small-signal
    gain tap a[1][0] is left untouched.  Zero taps stay zero, so sparse or
    identity PAs keep their structure in every state.
    """
    coeffs = {}
    for k, taps in base.coefficients.items():
        rng = np.random.default_rng([seed, state_index, k])
        sign_mag = rng.integers(0, 2, len(taps)) * 2 - 1
        sign_ph = rng.integers(0, 2, len(taps)) * 2 - 1
        if k == 1:
            factor = (1 + linear_mag * sign_mag) * np.exp(1j * linear_phase_rad * sign_ph)
            factor[0] = 1.0
        else:
            factor = (1 + nonlinear_mag * sign_mag) * np.exp(1j * nonlinear_phase_rad * sign_ph)
        coeffs[k] = taps * factor
    return PaModel(coeffs)
