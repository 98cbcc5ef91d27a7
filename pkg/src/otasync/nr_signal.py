"""PSS generation, OFDM modulation and the matched-filter reference."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

PSS_LENGTH = 127
NFFT = 4096
CP_SAMPLES = 288
SUPPORTED_SCS_KHZ = (15, 30, 60)

# [x(6), x(5), ..., x(0)]
_PSS_INIT_STATE = (1, 1, 1, 0, 1, 1, 0)
_NID2_SHIFT = 43


@dataclass(frozen=True)
class Numerology:
    scs_khz: int
    nfft: int = NFFT
    cp_samples: int = CP_SAMPLES

    def __post_init__(self):
        if self.scs_khz not in SUPPORTED_SCS_KHZ:
            raise ValueError(f"scs_khz must be one of {SUPPORTED_SCS_KHZ}, got {self.scs_khz}")
        if self.nfft < PSS_LENGTH or self.cp_samples < 0:
            raise ValueError("nfft must hold the PSS and cp_samples must be >= 0")

    @property
    def sample_rate_hz(self) -> float:
        return self.scs_khz * 1000.0 * self.nfft

    @property
    def sample_period_ns(self) -> float:
        return 1e9 / self.sample_rate_hz

    @property
    def cp_duration_ns(self) -> float:
        return self.cp_samples * self.sample_period_ns


@dataclass(frozen=True)
class PssSequence:
    n_id2: int
    symbols: np.ndarray = field(repr=False)

    def __post_init__(self):
        s = np.asarray(self.symbols)
        if s.shape != (PSS_LENGTH,):
            raise ValueError(f"PSS must have {PSS_LENGTH} symbols, got shape {s.shape}")
        if not np.all(np.abs(s) == 1):
            raise ValueError("PSS symbols must be +1 or -1")


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray = field(repr=False)
    sample_rate_hz: float

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim != 1 or s.size == 0:
            raise ValueError("waveform must be a nonempty 1-D sequence")
        if not np.all(np.isfinite(s)):
            raise ValueError("waveform contains non-finite samples")
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be positive")

    def __len__(self):
        return len(self.samples)

    @property
    def energy(self) -> float:
        return float(np.sum(np.abs(self.samples) ** 2))


def _check_nid2(n_id2):
    if isinstance(n_id2, bool) or not isinstance(n_id2, (int, np.integer)) or n_id2 not in (0, 1, 2):
        raise ValueError(f"n_id2 must be 0, 1 or 2, got {n_id2!r}")


@lru_cache(maxsize=1)
def _m_sequence() -> np.ndarray:
    x = np.zeros(PSS_LENGTH + 7, dtype=np.int8)
    x[:7] = _PSS_INIT_STATE[::-1]
    for i in range(PSS_LENGTH):
        x[i + 7] = (x[i + 4] + x[i]) % 2
    return x[:PSS_LENGTH]


def generate_pss(n_id2: int) -> PssSequence:
    """BPSK m-sequence d(n) = 1 - 2 x((n + 43 n_id2) mod 127)."""
    _check_nid2(n_id2)
    m = (np.arange(PSS_LENGTH) + _NID2_SHIFT * int(n_id2)) % PSS_LENGTH
    d = 1.0 - 2.0 * _m_sequence()[m]
    d.flags.writeable = False
    return PssSequence(int(n_id2), d)


def subcarrier_bins(nfft: int = NFFT) -> np.ndarray:
    """FFT bin indices of the 127 PSS subcarriers, centered on DC (DC included)."""
    k = np.arange(PSS_LENGTH) - PSS_LENGTH // 2
    return k % nfft


def modulate(pss: PssSequence, num: Numerology) -> Waveform:
    """Map the PSS onto a DC-centred grid, IFFT (scaled by 1/nfft) and prepend the CP."""
    grid = np.zeros(num.nfft, dtype=complex)
    grid[subcarrier_bins(num.nfft)] = pss.symbols
    symbol = np.fft.ifft(grid)
    samples = np.concatenate([symbol[num.nfft - num.cp_samples:], symbol])
    return Waveform(samples, num.sample_rate_hz)


def demodulate(wf: Waveform, num: Numerology) -> np.ndarray:
    """Strip the CP, forward FFT (unscaled) and return the 127 PSS bins."""
    s = np.asarray(wf.samples)
    if len(s) < num.cp_samples + num.nfft:
        raise ValueError("waveform shorter than one CP-prefixed symbol")
    grid = np.fft.fft(s[num.cp_samples:num.cp_samples + num.nfft])
    return grid[subcarrier_bins(num.nfft)]


@lru_cache(maxsize=16)
def _modulated(n_id2: int, num: Numerology) -> Waveform:
    return modulate(generate_pss(n_id2), num)


def reference_template(n_id2: int, num: Numerology) -> Waveform:
    """CP-free time-domain PSS symbol used as the matched filter."""
    _check_nid2(n_id2)
    wf = _modulated(int(n_id2), num)
    return Waveform(wf.samples[num.cp_samples:], wf.sample_rate_hz)


def transmit_waveform(n_id2: int, num: Numerology) -> Waveform:
    """Cached ``modulate(generate_pss(n_id2), num)``."""
    _check_nid2(n_id2)
    return _modulated(int(n_id2), num)


def circular_correlation(a, b) -> np.ndarray:
    """Normalized circular cross-correlation r[m] = sum_i a[i] conj(b[i+m]) / (|a| |b|)."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise ValueError("sequences must have equal length")
    r = np.fft.ifft(np.conj(np.fft.fft(a)) * np.fft.fft(b))
    return np.conj(r) / (np.linalg.norm(a) * np.linalg.norm(b))
