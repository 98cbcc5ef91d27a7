"""JSON scenario ingestion."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema

from . import channel
from .budget import E2EError, requirement
from .channel import LinkBudgetParams, ProfileError
from .estimator import FailurePolicy
from .montecarlo import TrialConfig
from .nr_signal import Numerology
from .ptp import DistributionParams, FactoryNode, FactoryTopology, PtpLink, SimClock


class ScenarioError(ValueError):
    """Invalid scenario; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def load_schema() -> dict:
    return json.loads(resources.files("otasync.data").joinpath("scenario.schema.json").read_text())


def canonical_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class Scenario:
    raw: dict
    trial: TrialConfig
    n_trials: int
    master_seed: int
    topology: FactoryTopology | None
    ptp: DistributionParams
    budget_level: int
    combination_policy: str
    gateway_internal_ns: float
    ota_ns: float | None

    @property
    def hash(self) -> str:
        return canonical_hash(self.raw)

    def e2e(self, ota_ns: float, distribution_ns) -> E2EError:
        return E2EError(
            ota_ns=float(ota_ns),
            gateway_internal_ns=self.gateway_internal_ns,
            distribution_ns=tuple(abs(float(v)) for v in distribution_ns),
            combination_policy=self.combination_policy,
        )


def _field_path(err: jsonschema.ValidationError) -> str:
    path = "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path).lstrip(".")
    if err.validator == "required":
        missing = err.message.split("'")[1]
        return f"{path}.{missing}" if path else missing
    if err.validator == "additionalProperties":
        return path or "<root>"
    return path or "<root>"


def parse_scenario(raw: dict) -> Scenario:
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        raise ScenarioError(_field_path(errors[0]), errors[0].message)

    ch = raw.get("channel", {})
    try:
        profile = channel.load_tdl_profile(ch.get("profile", "TDL-C"), ch.get("delay_spread_ns", 300.0))
    except ProfileError as exc:
        raise ScenarioError("channel.profile", str(exc)) from None

    snr_db = raw.get("snr_db")
    link_budget = None
    if snr_db is None:
        link_budget = LinkBudgetParams(**raw.get("link_budget", {}))
    elif "link_budget" in raw:
        raise ScenarioError("snr_db", "give either snr_db or link_budget, not both")

    fp = raw.get("failure_policy", {})
    trial = TrialConfig(
        numerology=Numerology(raw.get("scs_khz", 15)),
        distance_m=float(raw.get("distance_m", 1000.0)),
        profile=profile,
        snr_db=snr_db,
        link_budget=link_budget,
        n_id2=raw.get("n_id2", 0),
        policy=FailurePolicy(fp.get("max_abs_error_ns"), fp.get("experiment_failure_fraction", 0.10)),
        timing_reference=raw.get("timing_reference", "channel_peak"),
        delay_samples=raw.get("delay_samples"),
    )

    topology = None
    if "topology" in raw:
        t = raw["topology"]
        try:
            topology = FactoryTopology(
                gateway_position=tuple(t.get("gateway_position", (0.0, 0.0))),
                nodes=tuple(FactoryNode(n["id"], tuple(n["position"])) for n in t["nodes"]),
                mode=t.get("mode", "in_band"),
                chain_order=tuple(t["chain_order"]) if "chain_order" in t else None,
                service_area=tuple(t.get("service_area", (100.0, 100.0))),
            )
        except ValueError as exc:
            raise ScenarioError("topology", str(exc)) from None

    p = raw.get("ptp", {})
    ptp = DistributionParams(
        link=PtpLink(**p.get("link", {})),
        clock=SimClock(**p.get("clock", {})),
        gateway_clock=SimClock(**p.get("gateway_clock", {})),
        compensation=p.get("compensation", "perfect"),
        distance_error_m=p.get("distance_error_m", 0.0),
    )

    b = raw.get("budget", {})
    level = b.get("level", 1)
    requirement(level)
    return Scenario(
        raw=raw,
        trial=trial,
        n_trials=raw.get("n_trials", 5000),
        master_seed=raw["master_seed"],
        topology=topology,
        ptp=ptp,
        budget_level=level,
        combination_policy=b.get("combination_policy", "worst_case_sum"),
        gateway_internal_ns=float(b.get("gateway_internal_ns", 0.0)),
        ota_ns=b.get("ota_ns"),
    )


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ScenarioError("scenario", f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ScenarioError("scenario", f"invalid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ScenarioError("<root>", "scenario must be a JSON object")
    return parse_scenario(raw)
