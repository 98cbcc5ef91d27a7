"""Result files: a deterministic payload plus a segregated run_info block.

JSON files hold ``{"payload": ..., "run_info": ...}``.  Only ``run_info``
(wall-clock timestamp, package version) may differ between reruns.
CSV files open with ``#`` comment lines carrying the scenario hash and
master seed, followed by a header row.
"""

from __future__ import annotations

import csv
import io
import json
import math
from datetime import datetime, timezone
from pathlib import Path

from . import __version__


def _clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "item"):  # numpy scalar
        return _clean(obj.item())
    return obj


def payload_bytes(payload: dict) -> bytes:
    return json.dumps(_clean(payload), sort_keys=True, indent=2, allow_nan=False).encode()


def run_info() -> dict:
    return {"generated_at": datetime.now(timezone.utc).isoformat(), "otasync_version": __version__}


def write_json(path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"payload": _clean(payload), "run_info": run_info()}
    path.write_text(json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n")
    return path


def read_payload(path) -> dict:
    return json.loads(Path(path).read_text())["payload"]


def csv_text(header, rows, scenario_hash: str, master_seed: int) -> str:
    buf = io.StringIO()
    buf.write(f"# scenario_hash={scenario_hash}\n# master_seed={master_seed}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def write_csv(path, header, rows, scenario_hash: str, master_seed: int) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(csv_text(header, rows, scenario_hash, master_seed))
    return path
