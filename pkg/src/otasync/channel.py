"""Propagation delay, tapped-delay-line fading, AWGN and distance-to-SNR mapping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np
from scipy import fft as sfft

from .nr_signal import Waveform

SPEED_OF_LIGHT = 299_792_458.0
REFERENCE_DISTANCE_M = 1000.0
THERMAL_NOISE_DBM_PER_HZ = -174.0

# profile name -> bundled data file
PROFILE_FILES = {"TDL-C": "tdl_c.txt", "FLAT": "flat.txt"}

_GUARD_SAMPLES = 64


class ProfileError(ValueError):
    pass


@dataclass(frozen=True)
class TapProfile:
    name: str
    normalized_delays: tuple[float, ...]
    powers_db: tuple[float, ...]
    delay_spread_ns: float = 300.0
    source: str = ""

    def __post_init__(self):
        d = np.asarray(self.normalized_delays, dtype=float)
        if len(d) < 1 or len(d) != len(self.powers_db):
            raise ProfileError(f"{self.name}: need >= 1 tap and matching delay/power columns")
        if d[0] != 0 or np.any(d < 0) or np.any(np.diff(d) < 0):
            raise ProfileError(f"{self.name}: normalized delays must start at 0 and be nondecreasing")
        if not self.delay_spread_ns >= 0:
            raise ProfileError("delay_spread_ns must be >= 0")

    @property
    def n_taps(self) -> int:
        return len(self.normalized_delays)

    @property
    def delays_s(self) -> np.ndarray:
        return np.asarray(self.normalized_delays) * self.delay_spread_ns * 1e-9

    @property
    def linear_powers(self) -> np.ndarray:
        """Tap powers normalized to unit sum."""
        p = 10.0 ** (np.asarray(self.powers_db) / 10.0)
        return p / p.sum()


@dataclass(frozen=True)
class ChannelRealization:
    delays_s: np.ndarray = field(repr=False)
    gains: np.ndarray = field(repr=False)

    def __post_init__(self):
        if len(self.delays_s) != len(self.gains) or len(self.gains) == 0:
            raise ValueError("need matching, nonempty delay and gain arrays")

    @property
    def taps(self) -> list[tuple[float, complex]]:
        return list(zip(self.delays_s.tolist(), self.gains.tolist()))

    @property
    def total_power(self) -> float:
        return float(np.sum(np.abs(self.gains) ** 2))

    @classmethod
    def identity(cls) -> "ChannelRealization":
        return cls(np.zeros(1), np.ones(1, dtype=complex))


@dataclass(frozen=True)
class LinkBudgetParams:
    """Log-distance SNR model anchored at 1 km.

    The anchor is either ``reference_snr_db_at_1km`` or derived from the
    transmit power, free-space loss at 1 km and thermal noise over
    ``bandwidth_hz``.  Both describe the SNR at ``reference_scs_khz``; at
    other spacings the noise bandwidth grows with the spacing and the SNR
    drops by ``noise_bandwidth_scaling * 10 log10(scs / reference_scs)``.
    """

    carrier_hz: float = 6e9
    gnb_height_m: float = 6.0
    ue_height_m: float = 1.5
    tx_power_dbm: float = 30.0
    noise_figure_db: float = 7.0
    bandwidth_hz: float = 127 * 15e3
    pathloss_exponent: float = 2.3
    reference_snr_db_at_1km: float | None = None
    reference_scs_khz: int = 15
    noise_bandwidth_scaling: float = 0.5

    def __post_init__(self):
        if not (self.gnb_height_m > 0 and self.ue_height_m > 0):
            raise ValueError("antenna heights must be positive")
        if not self.carrier_hz > 0:
            raise ValueError("carrier_hz must be positive")
        if not self.bandwidth_hz > 0:
            raise ValueError("bandwidth_hz must be positive")


def propagation_delay_s(distance_m: float) -> float:
    if not distance_m >= 0:
        raise ValueError(f"distance must be >= 0, got {distance_m}")
    return distance_m / SPEED_OF_LIGHT


def _parse_profile(text: str, fallback_name: str) -> tuple[str, str, list[float], list[float]]:
    name, source = fallback_name, ""
    delays, powers = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            key = key.strip().lower()
            if key == "profile":
                name = value.strip()
            elif key == "source":
                source = value.strip()
            continue
        cols = line.split()
        if len(cols) != 2:
            raise ProfileError(f"line {lineno}: expected 'normalized_delay power_db', got {raw!r}")
        try:
            delays.append(float(cols[0]))
            powers.append(float(cols[1]))
        except ValueError as exc:
            raise ProfileError(f"line {lineno}: {exc}") from None
    if not delays:
        raise ProfileError("profile file has no taps")
    return name, source, delays, powers


def parse_tdl_profile(text: str, delay_spread_ns: float, name: str = "custom") -> TapProfile:
    name, source, delays, powers = _parse_profile(text, name)
    # standard tables are not strictly delay-ordered (TDL-C taps 4/5); stable sort keeps ties in file order
    order = np.argsort(delays, kind="stable")
    return TapProfile(
        name=name,
        normalized_delays=tuple(float(delays[i]) for i in order),
        powers_db=tuple(float(powers[i]) for i in order),
        delay_spread_ns=float(delay_spread_ns),
        source=source,
    )


def load_tdl_profile(name: str, delay_spread_ns: float = 300.0) -> TapProfile:
    key = name.upper()
    if key not in PROFILE_FILES:
        raise ProfileError(f"unknown profile {name!r}; available: {sorted(PROFILE_FILES)}")
    text = resources.files("otasync.data").joinpath(PROFILE_FILES[key]).read_text()
    return parse_tdl_profile(text, delay_spread_ns, name=key)


def realize(profile: TapProfile, seed) -> ChannelRealization:
    """Block Rayleigh fading: one circularly-symmetric Gaussian gain per tap."""
    rng = np.random.default_rng(seed)
    sigma = np.sqrt(profile.linear_powers / 2.0)
    n = profile.n_taps
    gains = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * sigma
    return ChannelRealization(profile.delays_s, gains)


def output_length(n_in: int, max_delay_s: float, sample_rate_hz: float) -> int:
    return sfft.next_fast_len(n_in + int(math.ceil(max_delay_s * sample_rate_hz)) + _GUARD_SAMPLES)


def apply(wf: Waveform, ch: ChannelRealization, extra_delay_s: float = 0.0) -> Waveform:
    """Sum of delayed, scaled copies of ``wf``; delays applied as a DFT phase ramp.

    The output is zero-padded to hold the largest delay plus a guard so
    fractional-delay tails are kept.
    """
    if not extra_delay_s >= 0:
        raise ValueError("extra_delay_s must be >= 0")
    fs = wf.sample_rate_hz
    delays = tuple((np.asarray(ch.delays_s, dtype=float) + extra_delay_s).tolist())
    n = output_length(len(wf), max(delays), fs)
    spectrum = sfft.fft(wf.samples, n)
    response = np.asarray(ch.gains) @ _phase_ramps(delays, n, fs)
    return Waveform(sfft.ifft(spectrum * response), fs)


@lru_cache(maxsize=8)
def _phase_ramps(delays: tuple[float, ...], n: int, fs: float) -> np.ndarray:
    # Monte Carlo trials share tap delays, only gains change
    ramps = np.exp(-2j * np.pi * np.outer(delays, sfft.fftfreq(n, d=1.0 / fs)))
    ramps.flags.writeable = False
    return ramps


def signal_power(samples, rel_tol: float = 1e-6) -> float:
    """Mean power over samples whose magnitude exceeds ``rel_tol`` of the peak."""
    mag = np.abs(np.asarray(samples))
    peak = mag.max()
    if peak == 0:
        return 0.0
    support = mag > rel_tol * peak
    return float(np.mean(mag[support] ** 2))


def add_awgn(wf: Waveform, snr_db: float, seed, signal_power_ref: float | None = None) -> Waveform:
    """Add complex Gaussian noise at ``snr_db`` below the signal power.

    ``signal_power_ref`` overrides the measured power, e.g. to fix the
    noise floor from the transmitted power so fading changes the SNR.
    """
    if not math.isfinite(snr_db):
        raise ValueError("snr_db must be finite")
    p = signal_power(wf.samples) if signal_power_ref is None else float(signal_power_ref)
    noise_power = p / 10.0 ** (snr_db / 10.0)
    rng = np.random.default_rng(seed)
    n = len(wf)
    noise = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * math.sqrt(noise_power / 2.0)
    return Waveform(wf.samples + noise, wf.sample_rate_hz)


def free_space_pathloss_db(distance_m: float, carrier_hz: float) -> float:
    return 20.0 * math.log10(4.0 * math.pi * distance_m * carrier_hz / SPEED_OF_LIGHT)


def anchor_snr_db(params: LinkBudgetParams) -> float:
    if params.reference_snr_db_at_1km is not None:
        return float(params.reference_snr_db_at_1km)
    d3 = math.hypot(REFERENCE_DISTANCE_M, params.gnb_height_m - params.ue_height_m)
    noise_dbm = THERMAL_NOISE_DBM_PER_HZ + 10.0 * math.log10(params.bandwidth_hz) + params.noise_figure_db
    return params.tx_power_dbm - free_space_pathloss_db(d3, params.carrier_hz) - noise_dbm


def snr_at_distance(params: LinkBudgetParams, distance_m: float, scs_khz: int | None = None) -> float:
    if not distance_m > 0:
        raise ValueError(f"distance must be > 0, got {distance_m}")
    snr = anchor_snr_db(params) - 10.0 * params.pathloss_exponent * math.log10(distance_m / REFERENCE_DISTANCE_M)
    if scs_khz is not None and params.noise_bandwidth_scaling:
        snr -= params.noise_bandwidth_scaling * 10.0 * math.log10(scs_khz / params.reference_scs_khz)
    return snr
