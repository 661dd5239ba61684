"""Waveform-level Monte Carlo: BER estimation in the asynchronous K-user
environment, plus the brute-force estimators that validate the
closed-form analysis.

Reproducibility contract: every random quantity is drawn from a
counter-based (Philox) stream keyed by (master_seed, realization_index,
role).  Realizations are independent work units; running them on any
number of workers gives bit-identical estimates because inclusion is
decided by scanning completed realizations in index order.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .analysis import correlation_functional
from .channel import ChannelParams, ChannelRealization, composite_waveform, sample_channel
from .errors import InfeasibleGeometryError, InvalidParameterError
from .pulses import grid_index
from .transceiver import (
    SystemConfig,
    _assemble,
    generate_codes,
    rake_template,
    select_combiner,
)

_ROLE_CHANNEL = 0
_ROLE_TRAFFIC = 1
_ROLE_NOISE = 2

_Z95 = 1.959963984540054


def rng_stream(master_seed: int, *path: int) -> np.random.Generator:
    """Independent Philox stream for the given (seed, path) key."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def wilson_bounds(errors: int, bits: int, z: float = _Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if bits < 1:
        raise InvalidParameterError("bits must be >= 1")
    p = errors / bits
    denom = 1.0 + z**2 / bits
    center = (p + z**2 / (2 * bits)) / denom
    half = z * math.sqrt(p * (1 - p) / bits + z**2 / (4 * bits**2)) / denom
    return center - half, center + half


def wilson_halfwidth(errors: int, bits: int, z: float = _Z95) -> float:
    lo, hi = wilson_bounds(errors, bits, z)
    return 0.5 * (hi - lo)


@dataclass(frozen=True)
class TrialPlan:
    """How much simulation to run and when to stop.

    A point is reported once min_errors have accumulated (but never before
    min_realizations channel draws), or when the bit budget runs out.
    max_bits defaults to n_realizations * bits_per_realization.
    """

    master_seed: int
    n_realizations: int
    bits_per_realization: int
    min_errors: int = 50
    max_bits: int | None = None
    min_realizations: int = 1

    def __post_init__(self):
        if self.n_realizations < 1 or self.bits_per_realization < 1:
            raise InvalidParameterError("realization and bit counts must be >= 1")
        if self.min_errors < 1 or self.min_realizations < 1:
            raise InvalidParameterError("min_errors and min_realizations must be >= 1")
        if self.master_seed < 0:
            raise InvalidParameterError("master_seed must be a nonnegative integer")

    @property
    def bit_budget(self) -> int:
        return self.max_bits if self.max_bits is not None else self.n_realizations * self.bits_per_realization


@dataclass(frozen=True)
class BerEstimate:
    """Accumulated error counts with a Wilson 95% half-width."""

    errors: int
    bits: int
    ber: float
    ci95: float
    realizations: int = 0
    capped: bool = False

    def ci_bounds(self) -> tuple[float, float]:
        return wilson_bounds(self.errors, self.bits)


def _check_frame_separable(waves, config: SystemConfig, dt: float) -> None:
    """A frame's content must not reach into the next frame (no IFI)."""
    t0_idx = [grid_index(w.t0, dt) for w in waves]
    chip = config.chip_samples(dt)
    frame = config.frame_samples(dt)
    extent = max(k + len(w.samples) for k, w in zip(t0_idx, waves)) + (config.hop_positions - 1) * chip
    if extent - min(t0_idx) > frame:
        raise InfeasibleGeometryError(
            "frame content spans more than one frame; the no-inter-frame-"
            "interference bound does not hold for this configuration"
        )


def _add_clipped(dest: np.ndarray, src: np.ndarray, start: int) -> None:
    lo = max(0, start)
    hi = min(len(dest), start + len(src))
    if hi > lo:
        dest[lo:hi] += src[lo - start : hi - start]


def realization_channels(
    config: SystemConfig,
    channel_params: ChannelParams,
    master_seed: int,
    index: int,
) -> tuple[ChannelRealization, list[ChannelRealization]]:
    """The (desired, interferers) channel draw of realization ``index``.

    This is the exact ensemble member run_ber simulates for the same plan
    seed, so conditional closed-form results can be paired realization by
    realization with the waveform simulation.
    """
    rng_ch = rng_stream(master_seed, index, _ROLE_CHANNEL)
    desired = sample_channel(channel_params, config, rng_ch)
    interferer_params = replace(
        channel_params, power_scale=channel_params.power_scale * config.interferer_power
    )
    interferers = [
        sample_channel(interferer_params, config, rng_ch) for _ in range(config.n_users - 1)
    ]
    return desired, interferers


def _simulate_realization(
    config: SystemConfig,
    pulses,
    channel_params: ChannelParams,
    scheme: str,
    selection: str,
    n_paths,
    n_bits: int,
    master_seed: int,
    index: int,
) -> tuple[int, int]:
    """Detect n_bits bits for one channel realization; return (errors, bits)."""
    dt = pulses[0].dt
    n_f = config.frames_per_symbol
    sym = config.symbol_samples(dt)
    rng_tr = rng_stream(master_seed, index, _ROLE_TRAFFIC)
    rng_nz = rng_stream(master_seed, index, _ROLE_NOISE)

    desired_chan, interferer_chans = realization_channels(
        config, channel_params, master_seed, index
    )

    comb = select_combiner(desired_chan, scheme, selection, n_paths)
    desired = [composite_waveform(p, desired_chan, desired_chan.gains) for p in pulses]
    templates = [composite_waveform(p, desired_chan, comb.beta) for p in pulses]
    _check_frame_separable(desired, config, dt)
    _check_frame_separable(templates, config, dt)

    bits = rng_tr.integers(0, 2, n_bits) * 2 - 1
    codes = generate_codes(config, n_bits * n_f, rng_tr)
    root = 1.0 / math.sqrt(n_f)

    template_block = _assemble(config, templates, codes.th, codes.polarity.astype(float))
    desired_block = _assemble(
        config, desired, codes.th, codes.polarity * np.repeat(bits, n_f) * root
    )

    window_start = grid_index(template_block.t0, dt)
    n_win = n_bits * sym
    received = np.zeros(n_win)
    _add_clipped(received, desired_block.samples, grid_index(desired_block.t0, dt) - window_start)

    for chan in interferer_chans:
        bits_k = rng_tr.integers(0, 2, n_bits + 1) * 2 - 1
        codes_k = generate_codes(config, (n_bits + 1) * n_f, rng_tr)
        offset_idx = int(rng_tr.integers(0, sym))
        u_set = [composite_waveform(p, chan, chan.gains) for p in pulses]
        block = _assemble(config, u_set, codes_k.th, codes_k.polarity * np.repeat(bits_k, n_f) * root)
        start = grid_index(block.t0, dt) + offset_idx - sym - window_start
        _add_clipped(received, block.samples, start)

    if config.noise_sigma > 0:
        received += (config.noise_sigma / math.sqrt(dt)) * rng_nz.standard_normal(n_win)

    template = np.zeros(n_win)
    _add_clipped(template, template_block.samples, 0)
    decisions = dt * (received * template).reshape(n_bits, sym).sum(axis=1)
    errors = int(np.count_nonzero(decisions * bits <= 0))
    return errors, n_bits


def run_realization(
    config: SystemConfig,
    pulses,
    channel_params: ChannelParams,
    n_bits: int,
    master_seed: int,
    index: int,
    scheme: str = "mrc",
    selection: str = "all",
    n_paths: int | None = None,
) -> tuple[int, int]:
    """Errors and bits for the single realization ``index`` of a plan seed.

    The channels are exactly those of realization_channels(config,
    channel_params, master_seed, index); traffic and noise come from the
    realization's own streams, so a conditional BER can be refined with a
    larger n_bits on the same channel draw.
    """
    return _simulate_realization(
        config, pulses, channel_params, scheme, selection, n_paths,
        n_bits, master_seed, index,
    )


def _stopped(errors: int, bits: int, used: int, plan: TrialPlan) -> bool:
    if bits >= plan.bit_budget:
        return True
    return errors >= plan.min_errors and used >= plan.min_realizations


def _scan_stop(results, plan: TrialPlan) -> tuple[int, int, int]:
    """Fold (errors, bits) pairs in index order, honoring the stop rule."""
    errors = bits = used = 0
    for e, b in results:
        errors += e
        bits += b
        used += 1
        if _stopped(errors, bits, used, plan):
            break
    return errors, bits, used


def run_ber(
    config: SystemConfig,
    pulses,
    channel_params: ChannelParams,
    plan: TrialPlan,
    scheme: str = "mrc",
    selection: str = "all",
    n_paths: int | None = None,
    threads: int = 1,
) -> BerEstimate:
    """Waveform-level BER of the user of interest.

    Per realization: draw desired and interferer channels, offsets, codes
    and bits, assemble the received signal, detect each bit by the sign of
    the template correlation.  Deterministic for a fixed plan at any
    thread count.
    """
    def args(r):
        return (
            config, pulses, channel_params, scheme, selection, n_paths,
            plan.bits_per_realization, plan.master_seed, r,
        )

    collected: list[tuple[int, int]] = []
    if threads <= 1:
        for r in range(plan.n_realizations):
            collected.append(_simulate_realization(*args(r)))
            errors, bits, used = _scan_stop(collected, plan)
            if _stopped(errors, bits, used, plan):
                break
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            r = 0
            while r < plan.n_realizations:
                wave = range(r, min(r + threads, plan.n_realizations))
                futures = [pool.submit(_simulate_realization, *args(i)) for i in wave]
                collected.extend(f.result() for f in futures)
                r = wave.stop
                errors, bits, used = _scan_stop(collected, plan)
                if _stopped(errors, bits, used, plan):
                    break
    errors, bits, used = _scan_stop(collected, plan)
    return BerEstimate(
        errors=errors,
        bits=bits,
        ber=errors / bits,
        ci95=wilson_halfwidth(errors, bits),
        realizations=used,
        capped=errors < plan.min_errors,
    )


def estimate_mai_variance(
    config: SystemConfig,
    pulses,
    desired_chan: ChannelRealization,
    interferer_chan: ChannelRealization,
    frame: int,
    n_samples: int,
    rng: np.random.Generator,
    scheme: str = "mrc",
    selection: str = "all",
    n_paths: int | None = None,
) -> float:
    """Brute-force variance of the per-frame MAI sample.

    Draws random codes, bits and an asynchronous offset, evaluates the
    interferer's contribution to frame ``frame`` of the desired user
    directly from the cross-correlation functions, and returns the sample
    variance.  This is the waveform-free oracle for the closed-form
    per-frame MAI variance.
    """
    if n_samples < 2:
        raise InvalidParameterError("n_samples must be >= 2")
    dt = pulses[0].dt
    n_p = config.pulse_types
    n_h = config.hop_positions
    n_f = config.frames_per_symbol
    chip = config.chip_samples(dt)
    frame_len = config.frame_samples(dt)

    comb = select_combiner(desired_chan, scheme, selection, n_paths)
    v = composite_waveform(pulses[frame % n_p], desired_chan, comb.beta)
    u_set = [composite_waveform(p, interferer_chan, interferer_chan.gains) for p in pulses]
    phis = [correlation_functional(u, v) for u in u_set]
    q0s = [grid_index(-phi.lag0, dt) for phi in phis]

    lag_lo = min(-q0 for q0 in q0s)
    lag_hi = max(len(phi.values) - q0 for phi, q0 in zip(phis, q0s))
    m_lo = frame + math.floor((lag_lo - (n_h - 1) * chip - (n_f * frame_len - 1)) / frame_len)
    m_hi = frame + math.ceil((lag_hi + (n_h - 1) * chip) / frame_len)

    tau = rng.integers(0, n_f * frame_len, n_samples)
    c_j = rng.integers(0, n_h, n_samples)
    sym_lo = math.floor(m_lo / n_f)
    sym_hi = math.floor(m_hi / n_f)
    sym_bits = {s: rng.integers(0, 2, n_samples) * 2 - 1 for s in range(sym_lo, sym_hi + 1)}

    acc = np.zeros(n_samples)
    for m in range(m_lo, m_hi + 1):
        r = m % n_p
        values = phis[r].values
        c_m = rng.integers(0, n_h, n_samples)
        d_m = rng.integers(0, 2, n_samples) * 2 - 1
        idx = (m - frame) * frame_len + (c_m - c_j) * chip + tau + q0s[r]
        valid = (idx >= 0) & (idx < len(values))
        contrib = np.where(valid, values[np.clip(idx, 0, len(values) - 1)], 0.0)
        acc += d_m * sym_bits[math.floor(m / n_f)] * contrib
    acc *= rng.integers(0, 2, n_samples) * 2 - 1  # template polarity d_j of user 1
    return float(np.var(acc, ddof=1))


def estimate_noise_variance(
    config: SystemConfig,
    templates,
    n_trials: int,
    rng: np.random.Generator,
    noise_std_scale: float = 1.0,
) -> float:
    """Sample variance of the correlator output under a noise-only input.

    ``noise_std_scale`` deliberately mis-scales the per-sample noise
    standard deviation; it exists so a broken discretization convention
    can be demonstrated to fail the validation checks.
    """
    if n_trials < 2:
        raise InvalidParameterError("n_trials must be >= 2")
    dt = templates[0].dt
    codes = generate_codes(config, config.frames_per_symbol, rng)
    tmpl = rake_template(config, codes, templates, 0)
    t = tmpl.samples
    scale = noise_std_scale * config.noise_sigma / math.sqrt(dt)
    outputs = np.empty(n_trials)
    chunk = max(1, min(n_trials, (1 << 22) // max(1, len(t))))
    done = 0
    while done < n_trials:
        take = min(chunk, n_trials - done)
        noise = rng.standard_normal((take, len(t)))
        outputs[done : done + take] = dt * scale * (noise @ t)
        done += take
    return float(np.var(outputs, ddof=1))
