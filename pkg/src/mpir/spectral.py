"""Analytic time-average autocorrelation / PSD of the transmitted signal,
and the empirical periodogram estimate used to verify them.

With per-frame polarity randomization the transmitted signal is zero mean
and cyclostationary, and its average PSD is simply the average of the
pulse energy spectra divided by the symbol time:

    Phi_ss(f) = (1 / (N_p * T_s)) * sum_l |P_l(f)|^2.

The empirical estimator averages rectangular-window periodograms over
non-overlapping, symbol-aligned segments; with that alignment the
estimator is unbiased at every frequency, so analytic and empirical
curves may be compared bin by bin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigMismatchError, GridMismatchError, InsufficientDataError, InvalidParameterError
from .pulses import cross_correlation, pulse_spectrum


@dataclass(frozen=True, eq=False)
class SpectralDensity:
    """Two-sided power spectral density on a uniform frequency grid (GHz)."""

    freqs: np.ndarray
    psd: np.ndarray

    def __post_init__(self):
        freqs = np.asarray(self.freqs, dtype=float)
        psd = np.asarray(self.psd, dtype=float)
        if freqs.shape != psd.shape:
            raise InvalidParameterError("freqs and psd must have equal shape")
        if np.any(psd < 0) or not np.all(np.isfinite(psd)):
            raise InvalidParameterError("psd must be finite and nonnegative")
        freqs.setflags(write=False)
        psd.setflags(write=False)
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "psd", psd)


@dataclass(frozen=True, eq=False)
class AvgAutocorrelation:
    """Time-average autocorrelation on a symmetric lag grid (ns)."""

    lags: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        lags = np.asarray(self.lags, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if lags.shape != values.shape:
            raise InvalidParameterError("lags and values must have equal shape")
        lags.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "lags", lags)
        object.__setattr__(self, "values", values)


def _check_pulse_set(pulses, config):
    if len(pulses) != config.pulse_types:
        raise ConfigMismatchError(
            f"config expects {config.pulse_types} pulse types, got {len(pulses)}"
        )
    dt = pulses[0].dt
    for p in pulses:
        if abs(p.dt - dt) > 1e-9 * dt:
            raise GridMismatchError("pulses must share one sample step")
        if abs(p.energy - 1.0) > 1e-6:
            raise InvalidParameterError(f"pulse {getattr(p, 'label', '?')} is not unit energy")
    return dt


def analytic_autocorrelation(pulses, config) -> AvgAutocorrelation:
    """(1/(N_p*T_f*N_f)) * sum_l phi_{p_l p_l}(tau) on the common lag grid."""
    dt = _check_pulse_set(pulses, config)
    corrs = [cross_correlation(p, p) for p in pulses]
    half = max((len(c.values) - 1) // 2 for c in corrs)
    total = np.zeros(2 * half + 1)
    for c in corrs:
        h = (len(c.values) - 1) // 2
        total[half - h : half + h + 1] += c.values
    total /= config.pulse_types * config.frame_time * config.frames_per_symbol
    lags = np.arange(-half, half + 1) * dt
    return AvgAutocorrelation(lags, total)


def analytic_psd(pulses, config, n_freq: int) -> SpectralDensity:
    """Phi_ss(f) = (1/(N_p*T_s)) * sum_l |P_l(f)|^2 on an n_freq-point grid."""
    _check_pulse_set(pulses, config)
    total = None
    freqs = None
    for p in pulses:
        spec = pulse_spectrum(p, n_freq)
        total = spec.magnitude_sq if total is None else total + spec.magnitude_sq
        freqs = spec.freqs
    total = total / (config.pulse_types * config.symbol_time)
    return SpectralDensity(freqs, total)


def empirical_psd(signal, segment_len: int, n_segments: int, symbol_samples: int | None = None) -> SpectralDensity:
    """Average of per-segment rectangular-window periodograms.

    ``signal`` is a sampled waveform (anything with samples/dt).  Segments
    are consecutive and non-overlapping; each periodogram is
    |dt * DFT|^2 / segment_duration.  When ``symbol_samples`` is given the
    segment length must be a whole number of symbol periods, which is what
    makes the estimator unbiased for a cyclostationary input.
    """
    samples = np.asarray(signal.samples, dtype=float)
    dt = signal.dt
    if segment_len < 2 or n_segments < 1:
        raise InvalidParameterError("segment_len >= 2 and n_segments >= 1 required")
    if symbol_samples is not None and segment_len % symbol_samples != 0:
        raise InvalidParameterError(
            f"segment_len={segment_len} is not a multiple of the symbol length {symbol_samples}"
        )
    if len(samples) < segment_len * n_segments:
        raise InsufficientDataError(
            f"signal has {len(samples)} samples, need {segment_len * n_segments}"
        )
    duration = segment_len * dt
    segs = samples[: segment_len * n_segments].reshape(n_segments, segment_len)
    spectra = np.abs(np.fft.fft(segs, axis=1) * dt) ** 2 / duration
    psd = spectra.mean(axis=0)
    freqs = np.fft.fftshift(np.fft.fftfreq(segment_len, d=dt))
    return SpectralDensity(freqs, np.fft.fftshift(psd))


def band_containing(sd: SpectralDensity, fraction: float = 0.99) -> tuple[float, float]:
    """Smallest symmetric band [-F, F] holding the given fraction of total power."""
    if not 0 < fraction <= 1:
        raise InvalidParameterError("fraction must be in (0, 1]")
    total = np.sum(sd.psd)
    order = np.argsort(np.abs(sd.freqs), kind="stable")
    running = np.cumsum(sd.psd[order])
    cut = np.searchsorted(running, fraction * total)
    cut = min(cut, len(order) - 1)
    f = abs(sd.freqs[order[cut]])
    return (-f, f)


def psd_mismatch(a: SpectralDensity, b: SpectralDensity, band: tuple[float, float]) -> float:
    """Relative L2 distance sqrt(int (a-b)^2) / sqrt(int a^2) over the band."""
    lo, hi = band
    if a.freqs.shape != b.freqs.shape or np.max(np.abs(a.freqs - b.freqs)) > 1e-9:
        raise GridMismatchError("spectral densities are not on a common frequency grid")
    sel = (a.freqs >= lo) & (a.freqs <= hi)
    if not np.any(sel):
        raise InvalidParameterError("band selects no frequency bins")
    ref = np.sqrt(np.sum(a.psd[sel] ** 2))
    if ref == 0.0:
        raise InvalidParameterError("reference density is zero over the band")
    return float(np.sqrt(np.sum((a.psd[sel] - b.psd[sel]) ** 2)) / ref)
