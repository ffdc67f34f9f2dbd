"""
File output: per-step, ensemble and sweep CSVs, JSON summaries and config hashing.

CSV files start with a ``# config_hash=<sha256>`` line followed by a header
row; floats are written with 17 significant digits so they round-trip
exactly. Wall-clock data never goes into these files.
"""

import hashlib
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel

from active_steering.harness.models import RunConfig
from steering_core.diagnostics import SweepPoint, TrajectoryRecord, bloch_vector, fidelity, purity
from steering_core.steering import Protocol

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
HASH_PREFIX = "# config_hash="
SWEEP_COLUMNS = ["gamma", "mean_F", "var_F", "std_F", "purity", "n_traj"]

# Fields that change how a run executes but not what it computes
_EXECUTION_FIELDS = {"output_dir", "workers"}


def config_hash(config: RunConfig) -> str:
    """sha256 of the canonical JSON of all result-relevant config fields."""
    payload = config.model_dump(exclude=_EXECUTION_FIELDS)
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


# ============================================================================
# Frames
# ============================================================================

def trajectory_frame(record: TrajectoryRecord) -> pd.DataFrame:
    """Per-step table of one trajectory."""
    columns: Dict[str, Any] = {
        "step": record.steps,
        "time": record.times,
        "alpha": record.choices,
        "xi": record.xi,
        "eta": record.eta,
        "F_target": record.fidelity,
    }
    for i, label in enumerate(record.reference_labels):
        columns[f"F_{label}"] = record.reference_fidelities[:, i]
    for i, axis in enumerate("xyz"):
        columns[f"r_{axis}"] = record.bloch[:, i] if record.bloch is not None else float("nan")
    columns["purity_walker_avg"] = record.purity
    return pd.DataFrame(columns)


def sweep_frame(points: Sequence[SweepPoint]) -> pd.DataFrame:
    return pd.DataFrame([p.to_dict() for p in points], columns=SWEEP_COLUMNS)


def ensemble_frame(steps: np.ndarray, times: np.ndarray, states: np.ndarray, protocol: Protocol) -> pd.DataFrame:
    """Per-snapshot table of a trajectory-averaged state history."""
    columns: Dict[str, Any] = {
        "step": steps,
        "time": times,
        "F_target": [fidelity(rho, protocol.target_state) for rho in states],
    }
    for label, reference in protocol.reference_states.items():
        columns[f"F_{label}"] = [fidelity(rho, reference) for rho in states]
    bloch = np.array([bloch_vector(rho) for rho in states]) if states.shape[1] == 2 else None
    for i, axis in enumerate("xyz"):
        columns[f"r_{axis}"] = bloch[:, i] if bloch is not None else float("nan")
    columns["purity"] = [purity(rho) for rho in states]
    return pd.DataFrame(columns)


# ============================================================================
# Writers
# ============================================================================

def write_csv(frame: pd.DataFrame, path: Path, hash_value: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        handle.write(f"{HASH_PREFIX}{hash_value}\n")
        frame.to_csv(handle, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.debug(f"Wrote {path}")
    return path


def _finite_or_none(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _finite_or_none(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_finite_or_none(v) for v in value]
    return value


def write_json(payload: Any, path: Path) -> Path:
    """Write a pydantic model or plain mapping as sorted, indented JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = payload.model_dump() if isinstance(payload, BaseModel) else payload
    path.write_text(json.dumps(_finite_or_none(data), indent=2, sort_keys=True, allow_nan=False) + "\n")
    logger.debug(f"Wrote {path}")
    return path


# ============================================================================
# Readers
# ============================================================================

def read_config_hash(path: Path) -> Optional[str]:
    with Path(path).open() as handle:
        first = handle.readline().strip()
    return first[len(HASH_PREFIX):] if first.startswith(HASH_PREFIX) else None


def read_sweep_csv(path: Path) -> Tuple[List[SweepPoint], Optional[str]]:
    """
    Load sweep points written by ``write_csv``.

    Returns:
        (points, embedded config hash)
    """
    frame = pd.read_csv(path, comment="#", float_precision="round_trip")
    missing = set(SWEEP_COLUMNS) - set(frame.columns)
    if missing:
        raise ValueError(f"{path} is not a sweep CSV (missing columns: {', '.join(sorted(missing))})")
    points = [
        SweepPoint(
            gamma=float(row.gamma),
            mean_fidelity=float(row.mean_F),
            fidelity_variance=float(row.var_F),
            fidelity_std=float(row.std_F),
            purity=float(row.purity),
            n_trajectories=int(row.n_traj),
        )
        for row in frame.itertuples(index=False)
    ]
    return points, read_config_hash(path)


def check_config_hash(path: Path, config: RunConfig) -> bool:
    """True when the file was produced by this configuration."""
    embedded = read_config_hash(path)
    matches = embedded == config_hash(config)
    if not matches:
        logger.warning(f"⚠️ Config hash mismatch for {path}: file {embedded}, config {config_hash(config)}")
    return matches
