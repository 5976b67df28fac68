"""JSON config ingestion, hashing and deterministic output helpers."""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from pathlib import Path
from typing import Any

from .errors import ParameterError
from .params import DEFAULT_REGIME_TOL, ModelParams, validate

PARAM_KEYS = ("r", "mu", "sigma", "rho", "gamma", "delta", "y1", "y2", "support")


def load_config(path: str | Path) -> dict[str, Any]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParameterError("UnreadableConfig", "config", str(exc)) from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParameterError("InvalidJSON", "config", str(exc)) from exc
    if not isinstance(data, dict):
        raise ParameterError("InvalidJSON", "config", "top level must be an object")
    return data


def params_from_config(cfg: dict[str, Any], *, tie_delta_to_k: bool | None = None) -> ModelParams:
    tie = bool(cfg.get("tie_delta_to_k", False)) if tie_delta_to_k is None else tie_delta_to_k
    tol = cfg.get("regime_tol", DEFAULT_REGIME_TOL)
    return validate({k: cfg[k] for k in PARAM_KEYS if k in cfg}, tie_delta_to_k=tie, regime_tol=tol)


def config_hash(cfg: dict[str, Any]) -> str:
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def round12(obj: Any) -> Any:
    """Recursively round floats to 12 significant digits; non-finite floats become None."""
    if isinstance(obj, bool) or obj is None:
        return obj
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return None
        return float(format(obj, ".12g"))
    if isinstance(obj, dict):
        return {k: round12(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round12(v) for v in obj]
    if hasattr(obj, "item"):
        return round12(obj.item())
    return obj


def write_json(path: Path, payload: dict[str, Any]) -> None:
    path.write_text(json.dumps(round12(payload), indent=2) + "\n", encoding="utf-8")


def timestamp() -> str:
    """UTC run timestamp; honours SOURCE_DATE_EPOCH for reproducible manifests."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    seconds = int(epoch) if epoch and epoch.isdigit() else int(time.time())
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(seconds))
