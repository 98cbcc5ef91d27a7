"""Synchronicity budget rows and end-to-end error evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

WORST_CASE_SUM = "worst_case_sum"
ROOT_SUM_SQUARE = "root_sum_square"
COMBINATION_POLICIES = (WORST_CASE_SUM, ROOT_SUM_SQUARE)


@dataclass(frozen=True)
class SyncRequirement:
    level: int
    budget_ns: float
    max_devices: int
    service_area_descriptor: str
    scenario: str


REQUIREMENTS = {
    1: SyncRequirement(
        1, 900.0, 300, "≤ 100 m x 100 m",
        "Motion control; control-to-control communication for industrial controller",
    ),
    2: SyncRequirement(2, 10_000.0, 10, "≤ 2500 m²", "High data rate video streaming"),
    3: SyncRequirement(3, 1_000.0, 100, "≤ 10 km²", "AVProd synchronization and packet timing"),
    4: SyncRequirement(4, 1_000.0, 100, "< 20 km²", "Smart Grid: synchronicity between PMUs"),
}


def requirement(level: int) -> SyncRequirement:
    try:
        return REQUIREMENTS[level]
    except (KeyError, TypeError):
        raise ValueError(f"unknown synchronicity level {level!r}; expected one of {sorted(REQUIREMENTS)}") from None


@dataclass(frozen=True)
class E2EError:
    ota_ns: float
    gateway_internal_ns: float
    distribution_ns: tuple[float, ...] = field(default=(0.0,))
    combination_policy: str = WORST_CASE_SUM

    def __post_init__(self):
        if self.ota_ns < 0 or self.gateway_internal_ns < 0 or any(d < 0 for d in self.distribution_ns):
            raise ValueError("error components must be >= 0 (pass magnitudes)")
        if self.combination_policy not in COMBINATION_POLICIES:
            raise ValueError(f"combination_policy must be one of {COMBINATION_POLICIES}")


def end_to_end_error(e: E2EError) -> np.ndarray:
    dist = np.asarray(e.distribution_ns, dtype=float)
    if e.combination_policy == WORST_CASE_SUM:
        return e.ota_ns + e.gateway_internal_ns + dist
    return np.sqrt(e.ota_ns**2 + e.gateway_internal_ns**2 + dist**2)


@dataclass(frozen=True)
class Verdict:
    passed: bool
    binding_constraint: str | None  # "budget", "device_count", "budget+device_count" or None
    max_total_ns: float
    n_devices: int
    margins_ns: tuple[float, ...]
    requirement: SyncRequirement
    service_area_note: str = ""

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "binding_constraint": self.binding_constraint,
            "max_total_ns": self.max_total_ns,
            "n_devices": self.n_devices,
            "margins_ns": list(self.margins_ns),
            "level": self.requirement.level,
            "budget_ns": self.requirement.budget_ns,
            "max_devices": self.requirement.max_devices,
            "service_area_note": self.service_area_note,
        }


def evaluate(totals_ns, req: SyncRequirement, topo=None, n_devices: int | None = None) -> Verdict:
    """PASS iff every node total is strictly below the budget and the device count fits.

    The service area is reported for reference only.
    """
    totals = np.atleast_1d(np.asarray(totals_ns, dtype=float))
    if n_devices is None:
        n_devices = len(topo.nodes) if topo is not None else len(totals)
    max_total = float(totals.max()) if totals.size else 0.0
    over_budget = not max_total < req.budget_ns
    too_many = n_devices > req.max_devices
    binding = "+".join(name for name, hit in (("budget", over_budget), ("device_count", too_many)) if hit) or None
    note = ""
    if topo is not None:
        w, d = topo.service_area
        note = f"topology area {w:g} m x {d:g} m; requirement area {req.service_area_descriptor} (not enforced)"
    return Verdict(
        passed=binding is None,
        binding_constraint=binding,
        max_total_ns=max_total,
        n_devices=int(n_devices),
        margins_ns=tuple(float(req.budget_ns - t) for t in totals),
        requirement=req,
        service_area_note=note,
    )
