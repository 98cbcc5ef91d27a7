"""Matched-filter delay estimation, timing error and failure classification."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft
from scipy.optimize import minimize_scalar

from .channel import ChannelRealization
from .nr_signal import PSS_LENGTH, Numerology, Waveform


@dataclass(frozen=True)
class DelayEstimate:
    lag_samples: int
    peak_magnitude: float
    peak_to_median_ratio: float


@dataclass(frozen=True)
class FailurePolicy:
    max_abs_error_ns: float | None = None  # None -> half the cyclic prefix
    experiment_failure_fraction: float = 0.10

    def __post_init__(self):
        if self.max_abs_error_ns is not None and not self.max_abs_error_ns > 0:
            raise ValueError("max_abs_error_ns must be > 0")
        if not 0 < self.experiment_failure_fraction < 1:
            raise ValueError("experiment_failure_fraction must lie in (0, 1)")

    def threshold_ns(self, num: Numerology) -> float:
        if self.max_abs_error_ns is None:
            return num.cp_duration_ns / 2.0
        return float(self.max_abs_error_ns)


def correlate(rx, template) -> np.ndarray:
    """Linear cross-correlation c[m] = sum_i rx[i + m] conj(t[i]) for m = 0..len(rx)-len(t)."""
    rx = np.asarray(rx)
    t = np.asarray(template)
    if len(rx) < len(t):
        raise ValueError(f"received waveform ({len(rx)}) shorter than template ({len(t)})")
    n = sfft.next_fast_len(len(rx))
    c = sfft.ifft(sfft.fft(rx, n) * np.conj(sfft.fft(t, n)))
    return c[: len(rx) - len(t) + 1]


def estimate_delay(rx: Waveform, template: Waveform) -> DelayEstimate:
    """Peak of |correlation| over every admissible lag; ties go to the smallest lag."""
    if rx.sample_rate_hz != template.sample_rate_hz:
        raise ValueError("rx and template sample rates differ")
    mag = np.abs(correlate(rx.samples, template.samples))
    lag = int(np.argmax(mag))
    median = float(np.median(mag))
    peak = float(mag[lag])
    ratio = peak / median if median > 0 else float("inf")
    return DelayEstimate(lag, peak, ratio)


def timing_error(
    est: DelayEstimate,
    true_delay_s: float,
    num: Numerology,
    *,
    reference_lag_samples: int = 0,
    true_delay_samples: float | None = None,
) -> float:
    """|estimated delay - true delay| in ns.

    ``reference_lag_samples`` is the lag a zero-delay arrival produces (the
    CP length when the received symbol carries its prefix).  Passing
    ``true_delay_samples`` keeps integer-sample delays exact.
    """
    if true_delay_samples is None:
        true_delay_samples = true_delay_s * num.sample_rate_hz
    return abs((est.lag_samples - reference_lag_samples) - true_delay_samples) * num.sample_period_ns


def is_failure(error_ns: float, num: Numerology, policy: FailurePolicy) -> bool:
    if error_ns < 0:
        raise ValueError("error_ns must be >= 0")
    return error_ns > policy.threshold_ns(num)


def _pss_kernel(tau_s, scs_hz: float) -> np.ndarray:
    # noiseless correlation of the DC-centred PSS with itself at continuous lag tau
    x = np.pi * scs_hz * np.asarray(tau_s, dtype=float)
    s = np.sin(x)
    small = np.abs(s) < 1e-12
    out = np.empty_like(x)
    out[~small] = np.sin(PSS_LENGTH * x[~small]) / s[~small]
    out[small] = PSS_LENGTH * np.cos(PSS_LENGTH * x[small]) / np.cos(x[small])
    return out


def channel_timing_offset_s(ch: ChannelRealization, num: Numerology) -> float:
    """Delay at which the noiseless band-limited channel response peaks.

    This is where a perfect matched filter would lock for this
    realization; a single-tap channel returns its tap delay exactly.
    """
    delays = np.asarray(ch.delays_s, dtype=float)
    gains = np.asarray(ch.gains)
    if len(delays) == 1 or np.count_nonzero(gains) <= 1:
        return float(delays[np.argmax(np.abs(gains))])
    scs_hz = num.scs_khz * 1e3
    lobe = 1.0 / (PSS_LENGTH * scs_hz)
    step = lobe / 16.0
    grid = np.arange(delays.min() - 2 * lobe, delays.max() + 2 * lobe + step, step)

    def response(t):
        return np.abs(_pss_kernel(np.subtract.outer(np.atleast_1d(t), delays), scs_hz) @ gains)

    coarse = response(grid)
    # refine the strongest few grid maxima; near-equal peaks can swap after refinement
    interior = (coarse[1:-1] >= coarse[:-2]) & (coarse[1:-1] >= coarse[2:])
    peaks = np.flatnonzero(interior) + 1
    if peaks.size == 0:
        peaks = np.array([int(np.argmax(coarse))])
    best_t, best_v = None, -1.0
    for i in peaks[np.argsort(coarse[peaks])[::-1][:3]]:
        res = minimize_scalar(
            lambda t: -response(t)[0],
            bounds=(grid[i] - step, grid[i] + step),
            method="bounded",
            options={"xatol": 1e-13},
        )
        t, v = (float(res.x), -float(res.fun)) if -res.fun >= coarse[i] else (float(grid[i]), float(coarse[i]))
        if v > best_v:
            best_t, best_v = t, v
    return best_t
