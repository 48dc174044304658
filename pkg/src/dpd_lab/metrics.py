"""Signal-quality metrics: gain-normalized NMSE, Welch PSD, and ACPR.

The PSD estimator averages periodic-Hann windowed periodograms.  The
periodic Hann window has exactly three nonzero DFT bins, so a signal that is
periodic per segment and brickwall-bandlimited leaks at most one bin past
its occupied edge - adjacent-channel measurements on such signals are
floor-dominated rather than window-limited.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signals import ComplexSignal, WaveformSpec, dbm_to_rms, derive_seed, generate_ofdm
from .transmitter import chain_forward

__all__ = [
    "DB_FLOOR",
    "PsdEstimate",
    "MetricsRow",
    "MetricsReport",
    "nmse_db",
    "welch_psd",
    "band_power",
    "acpr_db",
    "evaluate_models",
]

DB_FLOOR = -300.0


def _to_db(linear: np.ndarray) -> np.ndarray:
    floor = 10.0 ** (DB_FLOOR / 10.0)
    return 10.0 * np.log10(np.maximum(linear, floor))


@dataclass(frozen=True)
class PsdEstimate:
    """DC-centered Welch estimate; frequencies span (-fs/2, fs/2]."""

    freq_hz: np.ndarray
    psd_db: np.ndarray
    segment_length: int
    overlap_fraction: float
    window: str = "hann-periodic"

    def linear(self) -> np.ndarray:
        return 10.0 ** (self.psd_db / 10.0)


def nmse_db(reference: ComplexSignal, test: ComplexSignal, skip: int = 0) -> float:
    """Normalized mean square error in dB after least-squares gain removal.

    The leading ``skip`` samples are excluded (filter transients).  The test
    signal is divided by the complex gain that best fits it onto the
    reference, so any scalar gain/rotation is invisible.  Exact-zero error
    returns the -300 dB floor.
    """
    if len(reference) != len(test):
        raise ValueError("reference and test must have equal length")
    if skip < 0 or skip >= len(reference):
        raise ValueError("skip must be in [0, len)")
    ref = reference.samples[skip:]
    tst = test.samples[skip:]
    energy = np.vdot(ref, ref).real
    if energy == 0:
        raise ValueError("reference has zero energy")
    gain = np.vdot(ref, tst) / energy
    if gain == 0:
        raise ValueError("test is orthogonal to reference; gain undefined")
    err = ref - tst / gain
    ratio = np.vdot(err, err).real / energy
    if ratio <= 10.0 ** (DB_FLOOR / 10.0):
        return DB_FLOOR
    return float(10.0 * np.log10(ratio))


def welch_psd(signal: ComplexSignal, segment_length: int = 4096,
              overlap_fraction: float = 0.5) -> PsdEstimate:
    """Averaged periodogram with a periodic Hann window, DC-centered.

    Density is scaled so that sum(linear) * df equals the windowed mean
    power; for stationary signals this matches the time-domain mean power
    within the estimator's averaging error.
    """
    if segment_length < 16:
        raise ValueError("segment_length must be >= 16")
    if len(signal) < segment_length:
        raise ValueError("signal shorter than one segment")
    if not (0 <= overlap_fraction < 1):
        raise ValueError("overlap_fraction must be in [0, 1)")
    x = signal.samples
    fs = signal.sample_rate_hz
    hop = max(1, int(round(segment_length * (1 - overlap_fraction))))
    window = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(segment_length) / segment_length)
    scale = fs * np.sum(window**2)
    acc = np.zeros(segment_length)
    count = 0
    for start in range(0, len(x) - segment_length + 1, hop):
        seg = np.fft.fft(window * x[start : start + segment_length])
        acc += np.abs(seg) ** 2
        count += 1
    linear = acc / (count * scale)
    # shift DC to center, then move the -fs/2 bin to the end as +fs/2 so the
    # axis spans (-fs/2, fs/2]
    freq = np.fft.fftshift(np.fft.fftfreq(segment_length, 1.0 / fs))
    linear = np.fft.fftshift(linear)
    freq = np.roll(freq, -1)
    freq[-1] = -freq[-1]
    linear = np.roll(linear, -1)
    return PsdEstimate(freq, _to_db(linear), segment_length, overlap_fraction)


def band_power(psd: PsdEstimate, f_lo: float, f_hi: float) -> float:
    """Integrate linear PSD over [f_lo, f_hi)."""
    df = psd.freq_hz[1] - psd.freq_hz[0]
    mask = (psd.freq_hz >= f_lo) & (psd.freq_hz < f_hi)
    if not np.any(mask):
        raise ValueError(f"band [{f_lo:g}, {f_hi:g}) contains no PSD bins")
    return float(np.sum(psd.linear()[mask]) * df)


def acpr_db(signal: ComplexSignal, channel_bw_hz: float, offset_hz: float = None,
            integration_bw_hz: float = None, segment_length: int = 4096,
            overlap_fraction: float = 0.5):
    """Adjacent-channel power ratio from the Welch PSD.

    Returns (lower_db, upper_db, mean_db) with band powers measured in
    [+/-offset - ibw/2, +/-offset + ibw/2] against the main channel
    [-bw/2, bw/2].  Defaults: offset = integration bandwidth = channel
    bandwidth.  mean_db averages the two sides in the dB domain.
    """
    offset = channel_bw_hz if offset_hz is None else offset_hz
    ibw = channel_bw_hz if integration_bw_hz is None else integration_bw_hz
    fs = signal.sample_rate_hz
    if offset + ibw / 2 > fs / 2 or channel_bw_hz / 2 > fs / 2:
        raise ValueError("measurement bands exceed the Nyquist span")
    psd = welch_psd(signal, segment_length, overlap_fraction)
    main = band_power(psd, -channel_bw_hz / 2, channel_bw_hz / 2)
    floor = 10.0 ** (DB_FLOOR / 10.0)

    def side(center):
        p = band_power(psd, center - ibw / 2, center + ibw / 2)
        return max(p / main, floor) if main > 0 else floor

    lower = 10.0 * np.log10(side(-offset))
    upper = 10.0 * np.log10(side(+offset))
    return float(max(lower, DB_FLOOR)), float(max(upper, DB_FLOOR)), \
        float(max((lower + upper) / 2.0, DB_FLOOR))


@dataclass(frozen=True)
class MetricsRow:
    state_index: int
    bandwidth_hz: float
    power_dbm: float
    model: str
    nmse_db: float
    acpr_lower_db: float
    acpr_upper_db: float
    acpr_mean_db: float


@dataclass(frozen=True)
class MetricsReport:
    rows: tuple

    def for_model(self, model: str):
        return [r for r in self.rows if r.model == model]

    def models(self):
        seen = []
        for r in self.rows:
            if r.model not in seen:
                seen.append(r.model)
        return seen

    def mean_nmse_db(self, model: str) -> float:
        rows = self.for_model(model)
        return float(np.mean([r.nmse_db for r in rows]))

    def mean_acpr_db(self, model: str) -> float:
        rows = self.for_model(model)
        return float(np.mean([r.acpr_mean_db for r in rows]))


def evaluate_models(chain, models, grid, test_seed: int, num_samples: int = 20000,
                    sample_rate_hz: float = 200e6, modulation_order: int = 16,
                    ref_power_dbm: float = -19.0, ref_rms: float = 0.5,
                    fft_size: int = 2048, occupancy: float = 0.92,
                    transition_len: int = 256, segment_length: int = 4096,
                    overlap_fraction: float = 0.5, acpr_offset_factor: float = 1.0,
                    acpr_integration_factor: float = 1.0, nmse_skip: int = None,
                    collect_psd: bool = False):
    """Measure every model (plus the uncompensated baseline) on fresh signals.

    ``models`` is a sequence of (name, DpdModel).  Returns a MetricsReport
    with one row per state for the baseline and each model; with
    ``collect_psd`` also returns {(state, label): PsdEstimate} traces for
    the input, the uncompensated output, and each model's linearized output.
    """
    from .training import deploy_and_measure

    rows = []
    psd_traces = {}
    chain_memory = chain.total_memory
    for i in grid.indices:
        bw, p = grid.state(i)
        spec = WaveformSpec(bw, num_samples, dbm_to_rms(p, ref_power_dbm, ref_rms),
                            seed=derive_seed(test_seed, 2, i),
                            modulation_order=modulation_order)
        u = generate_ofdm(spec, sample_rate_hz, fft_size, occupancy, transition_len)
        baseline = chain_forward(u, chain, i)
        offset = acpr_offset_factor * bw
        ibw = acpr_integration_factor * bw
        if collect_psd:
            psd_traces[(i, "input")] = welch_psd(u, segment_length, overlap_fraction)
            psd_traces[(i, "no-dpd")] = welch_psd(baseline, segment_length, overlap_fraction)
        rows.append(MetricsRow(
            i, bw, p, "no-dpd",
            nmse_db(u, baseline, skip=chain_memory if nmse_skip is None else nmse_skip),
            *acpr_db(baseline, bw, offset, ibw, segment_length, overlap_fraction),
        ))
        for name, model in models:
            pair = deploy_and_measure(chain, model, grid, {i: u})
            _, linearized = pair[i]
            skip = (chain_memory + model.memory_length) if nmse_skip is None else nmse_skip
            if collect_psd:
                psd_traces[(i, name)] = welch_psd(linearized, segment_length,
                                                  overlap_fraction)
            rows.append(MetricsRow(
                i, bw, p, name,
                nmse_db(u, linearized, skip=skip),
                *acpr_db(linearized, bw, offset, ibw, segment_length, overlap_fraction),
            ))
    report = MetricsReport(tuple(rows))
    return (report, psd_traces) if collect_psd else report
