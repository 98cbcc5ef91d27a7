"""Seeded Monte Carlo trials, percentile statistics and the SCS x range grid."""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import channel
from .channel import LinkBudgetParams, TapProfile
from .estimator import (
    FailurePolicy,
    channel_timing_offset_s,
    estimate_delay,
    is_failure,
    timing_error,
)
from .nr_signal import Numerology, reference_template, transmit_waveform

log = logging.getLogger(__name__)

WORKERS_ENV = "OTASYNC_WORKERS"
DEFAULT_TRIALS = 5000
TABLE2_SCS_KHZ = (15, 30, 60)
TABLE2_DISTANCES_M = (1000.0, 3000.0)
TIMING_REFERENCES = ("channel_peak", "first_path")
VALUE = "value"
SYNC_FAILURE = "synchronization_failure"


@dataclass(frozen=True)
class TrialConfig:
    """Everything one trial needs.

    Exactly one of ``snr_db`` / ``link_budget`` sets the noise level.
    ``delay_samples`` overrides the distance-derived propagation delay
    (distance still drives the link budget).  ``timing_reference`` picks
    what the estimate is compared against: the first arriving path alone,
    or the first path plus the realization's noiseless correlation peak.
    """

    numerology: Numerology
    distance_m: float
    profile: TapProfile
    snr_db: float | None = None
    link_budget: LinkBudgetParams | None = None
    n_id2: int = 0
    policy: FailurePolicy = field(default_factory=FailurePolicy)
    timing_reference: str = "channel_peak"
    delay_samples: float | None = None

    def __post_init__(self):
        if not self.distance_m > 0:
            raise ValueError(f"distance_m must be > 0, got {self.distance_m}")
        if (self.snr_db is None) == (self.link_budget is None):
            raise ValueError("give exactly one of snr_db or link_budget")
        if self.timing_reference not in TIMING_REFERENCES:
            raise ValueError(f"timing_reference must be one of {TIMING_REFERENCES}")
        if self.delay_samples is not None and not self.delay_samples >= 0:
            raise ValueError("delay_samples must be >= 0")

    @property
    def effective_snr_db(self) -> float:
        if self.snr_db is not None:
            return float(self.snr_db)
        return channel.snr_at_distance(self.link_budget, self.distance_m, self.numerology.scs_khz)

    @property
    def propagation_delay_samples(self) -> float:
        if self.delay_samples is not None:
            return float(self.delay_samples)
        return channel.propagation_delay_s(self.distance_m) * self.numerology.sample_rate_hz


@dataclass(frozen=True)
class TrialOutcome:
    error_ns: float
    failed: bool


@dataclass
class ExperimentResult:
    n_trials: int
    errors_ns: np.ndarray = field(repr=False)
    p50_ns: float
    p90_ns: float
    failure_rate: float
    verdict: str
    threshold_ns: float
    snr_db: float

    @property
    def n_failed(self) -> int:
        return int(round(self.failure_rate * self.n_trials))

    def summary(self) -> dict:
        return {
            "n_trials": self.n_trials,
            "p50_ns": self.p50_ns,
            "p90_ns": self.p90_ns,
            "failure_rate": self.failure_rate,
            "failure_threshold_ns": self.threshold_ns,
            "snr_db": self.snr_db,
            "verdict": self.verdict,
        }


def trial_seed(master_seed: int, trial_index: int) -> int:
    """Stable 63-bit seed keyed by (master_seed, trial_index)."""
    state = np.random.SeedSequence([int(master_seed), int(trial_index)]).generate_state(2, np.uint32)
    return (int(state[0]) << 31) ^ int(state[1])


def nearest_rank(values, q: float) -> float:
    """The ceil(q n)-th smallest value."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("no values")
    k = max(1, math.ceil(q * v.size - 1e-9))
    return float(v[k - 1])


def run_trial(cfg: TrialConfig, seed: int) -> TrialOutcome:
    num = cfg.numerology
    ch_seed, noise_seed = np.random.SeedSequence(int(seed)).spawn(2)
    tx = transmit_waveform(cfg.n_id2, num)
    ch = channel.realize(cfg.profile, ch_seed)
    delay_samples = cfg.propagation_delay_samples
    rx = channel.apply(tx, ch, delay_samples / num.sample_rate_hz)
    # noise floor fixed by the transmitted power: fades lower the received SNR
    rx = channel.add_awgn(rx, cfg.effective_snr_db, noise_seed, signal_power_ref=channel.signal_power(tx.samples))
    est = estimate_delay(rx, reference_template(cfg.n_id2, num))
    if cfg.timing_reference == "channel_peak":
        delay_samples = delay_samples + channel_timing_offset_s(ch, num) * num.sample_rate_hz
    err = timing_error(
        est, 0.0, num, reference_lag_samples=num.cp_samples, true_delay_samples=delay_samples
    )
    return TrialOutcome(err, is_failure(err, num, cfg.policy))


def _run_chunk(args) -> list[float]:
    cfg, master_seed, indices = args
    return [run_trial(cfg, trial_seed(master_seed, i)).error_ns for i in indices]


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


def summarize(errors_ns, cfg: TrialConfig) -> ExperimentResult:
    errors = np.asarray(errors_ns, dtype=float)
    threshold = cfg.policy.threshold_ns(cfg.numerology)
    n_failed = int(np.count_nonzero(errors > threshold))
    rate = n_failed / errors.size
    verdict = SYNC_FAILURE if rate >= cfg.policy.experiment_failure_fraction else VALUE
    return ExperimentResult(
        n_trials=int(errors.size),
        errors_ns=errors,
        p50_ns=nearest_rank(errors, 0.5),
        p90_ns=nearest_rank(errors, 0.9),
        failure_rate=rate,
        verdict=verdict,
        threshold_ns=threshold,
        snr_db=cfg.effective_snr_db,
    )


def run_experiment(
    cfg: TrialConfig, n_trials: int = DEFAULT_TRIALS, master_seed: int = 0, workers: int | None = None
) -> ExperimentResult:
    """Run ``n_trials`` seeded trials; the result does not depend on ``workers``."""
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1:
        errors = _run_chunk((cfg, master_seed, range(n_trials)))
    else:
        bounds = np.linspace(0, n_trials, 4 * workers + 1).astype(int)
        chunks = [(cfg, master_seed, range(a, b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            errors = [e for part in pool.map(_run_chunk, chunks) for e in part]
    return summarize(errors, cfg)


@dataclass
class Table2Cell:
    scs_khz: int
    distance_m: float
    result: ExperimentResult

    @property
    def failed(self) -> bool:
        return self.result.verdict == SYNC_FAILURE

    @property
    def display(self) -> str:
        return SYNC_FAILURE if self.failed else f"{self.result.p90_ns:.1f}"


@dataclass
class Table2Report:
    cells: list[Table2Cell]
    master_seed: int
    n_trials: int
    calibration: LinkBudgetParams

    def cell(self, scs_khz: int, distance_m: float) -> Table2Cell:
        for c in self.cells:
            if c.scs_khz == scs_khz and c.distance_m == distance_m:
                return c
        raise KeyError((scs_khz, distance_m))

    def rows(self) -> list[list[str]]:
        """One row per SCS, one column per range."""
        out = []
        for scs in sorted({c.scs_khz for c in self.cells}):
            dists = sorted(c.distance_m for c in self.cells if c.scs_khz == scs)
            out.append([str(scs)] + [self.cell(scs, d).display for d in dists])
        return out


def table2_suite(
    calibration: LinkBudgetParams,
    master_seed: int,
    n_trials: int = DEFAULT_TRIALS,
    profile: TapProfile | None = None,
    policy: FailurePolicy | None = None,
    timing_reference: str = "channel_peak",
    workers: int | None = None,
    scs_values=TABLE2_SCS_KHZ,
    distances_m=TABLE2_DISTANCES_M,
) -> Table2Report:
    # every cell reuses the same trial seeds (common random numbers)
    profile = profile or channel.load_tdl_profile("TDL-C", 300.0)
    policy = policy or FailurePolicy()
    cells = []
    for scs in scs_values:
        for d in distances_m:
            cfg = TrialConfig(
                numerology=Numerology(scs),
                distance_m=float(d),
                profile=profile,
                link_budget=calibration,
                policy=policy,
                timing_reference=timing_reference,
            )
            log.info("table2 cell scs=%s kHz distance=%s m snr=%.2f dB", scs, d, cfg.effective_snr_db)
            cells.append(Table2Cell(scs, float(d), run_experiment(cfg, n_trials, master_seed, workers)))
    return Table2Report(cells, master_seed, n_trials, calibration)


@dataclass
class CalibrationResult:
    anchor_snr_db: float
    achieved_p90_ns: float
    target_p90_ns: float
    iterations: int
    converged: bool
    params: LinkBudgetParams


def calibrate(
    target_p90_ns: float,
    distance_m: float = 1000.0,
    scs_khz: int = 15,
    base: LinkBudgetParams | None = None,
    n_trials: int = DEFAULT_TRIALS,
    master_seed: int = 0,
    rel_tol: float = 0.02,
    bracket: tuple[float, float] = (-30.0, 10.0),
    max_iter: int = 40,
    profile: TapProfile | None = None,
    timing_reference: str = "channel_peak",
    workers: int | None = None,
) -> CalibrationResult:
    """Bisect the 1 km anchor SNR until p90 at (scs, distance) hits the target.

    p90 falls as the anchor rises; every evaluation reuses the same trial
    seeds, so the objective is deterministic.
    """
    if not target_p90_ns > 0:
        raise ValueError("target_p90_ns must be > 0")
    base = base or LinkBudgetParams()
    profile = profile or channel.load_tdl_profile("TDL-C", 300.0)

    def p90_at(anchor):
        params = replace(base, reference_snr_db_at_1km=float(anchor))
        cfg = TrialConfig(
            Numerology(scs_khz), float(distance_m), profile,
            link_budget=params, timing_reference=timing_reference,
        )
        return run_experiment(cfg, n_trials, master_seed, workers).p90_ns

    lo, hi = bracket
    p_lo, p_hi = p90_at(lo), p90_at(hi)
    if not p_hi <= target_p90_ns <= p_lo:
        raise ValueError(
            f"target {target_p90_ns} ns outside bracket: p90={p_lo:.3g} ns at {lo} dB, {p_hi:.3g} ns at {hi} dB"
        )
    best = (hi, p_hi)
    it = 0
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        p = p90_at(mid)
        log.info("calibrate iter %d: anchor=%.4f dB p90=%.3f ns", it, mid, p)
        if abs(p - target_p90_ns) < abs(best[1] - target_p90_ns):
            best = (mid, p)
        if abs(p - target_p90_ns) <= rel_tol * target_p90_ns:
            break
        if p > target_p90_ns:
            lo = mid
        else:
            hi = mid
    anchor, p = best
    return CalibrationResult(
        anchor_snr_db=anchor,
        achieved_p90_ns=p,
        target_p90_ns=float(target_p90_ns),
        iterations=it,
        converged=abs(p - target_p90_ns) <= rel_tol * target_p90_ns,
        params=replace(base, reference_snr_db_at_1km=anchor),
    )
