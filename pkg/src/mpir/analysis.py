"""Closed-form receiver analysis: MAI variances, output-noise variance and
the approximate bit error probability under the standard Gaussian
approximation.

Conventions used consistently here (and pinned by the Monte Carlo
cross-checks in the test suite):

* ``mai_variance_multi`` returns the per-(interferer, frame-type) matrix
  sigma2[k][j] BEFORE the 1/N_h^2 factor; the BEP denominator applies
  1/(N_f * N_h^2) exactly once.  ``mai_variance_classical`` follows the
  same convention for the single-pulse reduction.
* All lag integrals are left-rectangle sums at the waveform sample step.
  The integrands vanish at the window edges (single-frame containment),
  so this coincides with the trapezoid rule, and it makes the
  single-pulse reduction exact at floating-point level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .channel import ChannelParams, composite_waveform, sample_channel
from .errors import ConfigMismatchError, DegenerateInputError, InvalidParameterError
from .pulses import CorrelationFunction, cross_correlation, grid_index
from .transceiver import SystemConfig, decision_statistic, select_combiner

_SQRT_PI = math.sqrt(math.pi)
_SQRT_2 = math.sqrt(2.0)


def _erfc_positive(z: float) -> float:
    """erfc(z) for z >= 0 to ~1e-15 relative accuracy.

    Below z = 2 the Taylor series of erf is summed directly; above,
    the Laplace continued fraction is evaluated with the modified
    Lentz scheme.
    """
    if z == 0.0:
        return 1.0
    if z < 2.0:
        z2 = z * z
        term = z
        acc = z
        n = 0
        while True:
            n += 1
            term *= -z2 / n
            contrib = term / (2 * n + 1)
            acc += contrib
            if abs(contrib) <= 1e-18 * abs(acc):
                break
        return 1.0 - (2.0 / _SQRT_PI) * acc
    ez2 = math.exp(-z * z)
    if ez2 == 0.0:
        return 0.0
    tiny = 1e-300
    f = z
    c = f
    d = 0.0
    for k in range(1, 200):
        a = 0.5 * k
        d = z + a * d
        if d == 0.0:
            d = tiny
        c = z + a / c
        if c == 0.0:
            c = tiny
        d = 1.0 / d
        delta = c * d
        f *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return ez2 / (_SQRT_PI * f)


def qfunc(x):
    """Gaussian tail probability Q(x) = P(N(0,1) > x) = erfc(x / sqrt 2) / 2."""
    if np.ndim(x) == 0:
        z = float(x) / _SQRT_2
        return 0.5 * _erfc_positive(z) if z >= 0 else 1.0 - 0.5 * _erfc_positive(-z)
    return np.array([qfunc(v) for v in np.asarray(x, dtype=float)])


def correlation_functional(u, v) -> CorrelationFunction:
    """phi_uv(x) = integral u(t - x) v(t) dt for composite waveforms."""
    return cross_correlation(u, v)


def _zero_lag(u, v) -> float:
    """phi_uv(0) as an exact aligned inner product."""
    return decision_statistic(u, v)


@dataclass(frozen=True, eq=False)
class MaiVariance:
    """Interference variances conditioned on the channel realizations.

    per_frame[k, j] is sigma2_M(k, j) for interferer k and frame type j
    (before the 1/N_h^2 factor).  ``total`` is the BEP-denominator term
    sum(per_frame) / (N_f * N_h^2); ``output_variance`` is the variance
    of the total MAI in the decision statistic, sum / (N_p * N_h^2).
    """

    per_frame: np.ndarray
    total: float
    output_variance: float

    def __post_init__(self):
        per_frame = np.asarray(self.per_frame, dtype=float)
        if np.any(per_frame < 0):
            raise InvalidParameterError("MAI variances cannot be negative")
        per_frame.setflags(write=False)
        object.__setattr__(self, "per_frame", per_frame)


def _phi_sq_cumsum(phi: CorrelationFunction):
    """Prefix sums of phi^2 plus the grid index of lag zero."""
    cs = np.concatenate(([0.0], np.cumsum(phi.values**2)))
    q0 = grid_index(-phi.lag0, phi.lag_step)
    return cs, q0, len(phi.values)


def _range_sum(cs, lo, hi, n):
    lo = max(lo, 0)
    hi = min(hi, n)
    if hi <= lo:
        return 0.0
    return cs[hi] - cs[lo]


def _sigma2_frame(phis, j: int, config: SystemConfig, dt: float) -> float:
    """sigma2_M(k, j): TH- and delay-averaged squared correlation mass.

    (1/(T_f N_p)) sum_{m=j-N_p..j} sum_{|l|<N_h} (N_h - |l|)
        int_0^{N_p T_f} phi_{u_m v_j}^2((m-j) T_f + l T_c + tau) dtau
    """
    n_p = config.pulse_types
    n_h = config.hop_positions
    chip = config.chip_samples(dt)
    frame = config.frame_samples(dt)
    n_tau = n_p * frame
    pre = [_phi_sq_cumsum(phi) for phi in phis]
    total = 0.0
    for m in range(j - n_p, j + 1):
        cs, q0, n = pre[m % n_p]
        for l in range(1 - n_h, n_h):
            start = (m - j) * frame + l * chip + q0
            total += (n_h - abs(l)) * _range_sum(cs, start, start + n_tau, n)
    return total * dt / (config.frame_time * n_p)


def mai_variance_multi(interferer_sets, templates, config: SystemConfig) -> MaiVariance:
    """Conditional MAI variances for every (interferer, frame type) pair.

    interferer_sets[k] holds the N_p received composites of interferer k;
    templates holds the N_p RAKE template composites of the desired user.
    """
    n_p = config.pulse_types
    if len(templates) != n_p:
        raise ConfigMismatchError(f"need {n_p} templates, got {len(templates)}")
    dt = templates[0].dt
    per_frame = np.zeros((len(interferer_sets), n_p))
    for k, u_set in enumerate(interferer_sets):
        if len(u_set) != n_p:
            raise ConfigMismatchError(f"interferer {k} must supply {n_p} composites")
        for j in range(n_p):
            phis = [correlation_functional(u_set[r], templates[j]) for r in range(n_p)]
            per_frame[k, j] = _sigma2_frame(phis, j, config, dt)
    scale = config.frames_per_symbol * config.hop_positions**2
    total = float(per_frame.sum() / scale)
    out_var = float(per_frame.sum() / (n_p * config.hop_positions**2))
    return MaiVariance(per_frame, total, out_var)


def mai_variance_classical(u, v, config: SystemConfig) -> float:
    """Single-pulse MAI variance sigma2_M(k) for one interferer.

    (1/T_f) sum_{|l|<N_h} (N_h - |l|) int_{-T_f}^{T_f} phi_uv^2(l T_c + tau) dtau.
    The 1/N_h^2 factor is NOT included here; bep_single applies
    1/(N_f N_h^2) to the sum over interferers, consistently with
    mai_variance_multi.
    """
    dt = v.dt
    n_h = config.hop_positions
    chip = config.chip_samples(dt)
    frame = config.frame_samples(dt)
    cs, q0, n = _phi_sq_cumsum(correlation_functional(u, v))
    total = 0.0
    for l in range(1 - n_h, n_h):
        start = l * chip - frame + q0
        total += (n_h - abs(l)) * _range_sum(cs, start, start + 2 * frame, n)
    return total * dt / config.frame_time


def noise_variance(templates, config: SystemConfig) -> float:
    """Variance of the correlator output noise:
    noise_sigma^2 * (N_f / N_p) * sum_j phi_{v_j}(0)."""
    if len(templates) != config.pulse_types:
        raise ConfigMismatchError(f"need {config.pulse_types} templates")
    energy = sum(v.energy for v in templates)
    return config.noise_sigma**2 * config.frames_per_symbol / config.pulse_types * energy


@dataclass(frozen=True)
class BepResult:
    """One conditional bit-error-probability evaluation.

    signal_term is the numerator, mai_term and noise_term the two
    denominator variance contributions, pe = Q(signal / sqrt(mai + noise)).
    """

    signal_term: float
    mai_term: float
    noise_term: float
    pe: float


def _bep_from_terms(signal: float, mai: float, noise: float) -> BepResult:
    denom = mai + noise
    if denom <= 0.0:
        raise DegenerateInputError("BEP denominator is zero: no interference and no noise")
    return BepResult(signal, mai, noise, qfunc(signal / math.sqrt(denom)))


def bep_multi(desired, templates, mai, config: SystemConfig) -> BepResult:
    """Approximate BEP of the N_p-pulse system, conditioned on the channels.

    pe = Q( (1/sqrt N_p) sum_j phi_{u_j v_j}(0)
            / sqrt(mai_total + noise_sigma^2 sum_j phi_{v_j}(0)) ),
    with mai_total the (1/(N_f N_h^2))-scaled sum from mai_variance_multi.
    """
    n_p = config.pulse_types
    if len(desired) != n_p or len(templates) != n_p:
        raise ConfigMismatchError(f"need {n_p} desired composites and templates")
    signal = sum(_zero_lag(u, v) for u, v in zip(desired, templates)) / math.sqrt(n_p)
    mai_term = float(mai.total) if isinstance(mai, MaiVariance) else float(mai)
    noise_term = config.noise_sigma**2 * sum(v.energy for v in templates)
    return _bep_from_terms(signal, mai_term, noise_term)


def bep_single(u, v, interferer_variances, config: SystemConfig) -> BepResult:
    """Single-pulse BEP:
    pe = Q( phi_uv(0) / sqrt((1/(N_f N_h^2)) sum_k sigma2_M(k)
                             + noise_sigma^2 phi_v(0)) )."""
    signal = _zero_lag(u, v)
    var_sum = float(np.sum(np.asarray(interferer_variances, dtype=float)))
    mai_term = var_sum / (config.frames_per_symbol * config.hop_positions**2)
    noise_term = config.noise_sigma**2 * v.energy
    return _bep_from_terms(signal, mai_term, noise_term)


@dataclass(frozen=True, eq=False)
class AveragedBep:
    """Channel-ensemble average of the conditional BEP over a noise sweep."""

    noise_sigmas: np.ndarray
    pe: np.ndarray
    stderr: np.ndarray
    n_realizations: int
    mean_mai_output_variance: float


def conditional_bep_terms(
    config: SystemConfig,
    pulses,
    desired_chan,
    interferer_chans,
    scheme: str = "mrc",
    selection: str = "all",
    n_paths: int | None = None,
):
    """(signal, MaiVariance, template-energy) for one set of realizations.

    The noise term for noise amplitude s is s**2 times the returned
    template energy, so a noise sweep can reuse these terms.
    """
    comb = select_combiner(desired_chan, scheme, selection, n_paths)
    desired = [composite_waveform(p, desired_chan, desired_chan.gains) for p in pulses]
    templates = [composite_waveform(p, desired_chan, comb.beta) for p in pulses]
    interferer_sets = [
        [composite_waveform(p, ch, ch.gains) for p in pulses] for ch in interferer_chans
    ]
    n_p = config.pulse_types
    signal = sum(_zero_lag(u, v) for u, v in zip(desired, templates)) / math.sqrt(n_p)
    mai = mai_variance_multi(interferer_sets, templates, config)
    energy = sum(v.energy for v in templates)
    return signal, mai, energy


def bep_averaged(
    config: SystemConfig,
    pulses,
    channel_params: ChannelParams,
    n_realizations: int,
    rng: np.random.Generator,
    scheme: str = "mrc",
    selection: str = "all",
    n_paths: int | None = None,
    noise_sigmas=None,
) -> AveragedBep:
    """Mean conditional BEP over independent channel draws.

    Each realization draws one desired channel from channel_params and
    n_users - 1 interferer channels with power_scale multiplied by
    config.interferer_power.  The same ensemble is reused for every noise
    amplitude in the sweep.
    """
    if n_realizations < 1:
        raise InvalidParameterError("n_realizations must be >= 1")
    sigmas = np.atleast_1d(
        np.asarray(noise_sigmas if noise_sigmas is not None else [config.noise_sigma], dtype=float)
    )
    interferer_params = replace(
        channel_params, power_scale=channel_params.power_scale * config.interferer_power
    )
    pes = np.zeros((n_realizations, len(sigmas)))
    mai_out = np.zeros(n_realizations)
    for i in range(n_realizations):
        desired = sample_channel(channel_params, config, rng)
        interferers = [
            sample_channel(interferer_params, config, rng) for _ in range(config.n_users - 1)
        ]
        signal, mai, energy = conditional_bep_terms(
            config, pulses, desired, interferers, scheme, selection, n_paths
        )
        mai_out[i] = mai.output_variance
        for s_idx, s in enumerate(sigmas):
            denom = mai.total + s**2 * energy
            if denom <= 0.0:
                raise DegenerateInputError("BEP denominator is zero")
            pes[i, s_idx] = qfunc(signal / math.sqrt(denom))
    pe = pes.mean(axis=0)
    stderr = (
        pes.std(axis=0, ddof=1) / math.sqrt(n_realizations)
        if n_realizations > 1
        else np.zeros(len(sigmas))
    )
    return AveragedBep(sigmas, pe, stderr, n_realizations, float(mai_out.mean()))
