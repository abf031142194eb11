# -*- coding: utf-8 -*-
'''
@File: src/q2n/config.py
@Time: 2026/10/16
@Author: UniqueDeep
@Description: Configuration management for q2n (.env, q2n.json defaults, environment knobs).
'''

import json
import os
from dataclasses import dataclass, replace
from pathlib import Path

from dotenv import load_dotenv

from .errors import ArgumentError

# Load environment variables (override=True ensures .env file overrides system environment variables)
load_dotenv(override=True)

CONFIG_FILENAME = "q2n.json"

DEFAULT_LAMBDA_GRID = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
DEFAULT_T_GRID = (0.05, 0.1, 0.15, 0.2)
DEFAULT_BENCH_SIZES = (64, 128, 256, 512)
BP_EPOCHS = (20, 50, 100)
BP_LRS = (5e-4, 1e-3, 2e-3)


@dataclass(frozen=True)
class Defaults:
    """Experiment defaults; every field can be overridden by q2n.json and then by CLI flags."""

    bits: int = 2
    group: int | None = 128  # None means per-row
    t: float = 0.1
    lambda_reg: float = 0.2
    selector: str = "psr"
    quantizer: str = "gptq"
    exclude_top: int = 1
    damp: float = 0.01
    seed: int = 0
    t_grid: tuple = DEFAULT_T_GRID
    lambda_grid: tuple = DEFAULT_LAMBDA_GRID
    bench_sizes: tuple = DEFAULT_BENCH_SIZES
    bp_epochs: tuple = BP_EPOCHS
    bp_lrs: tuple = BP_LRS


def _resolve_env(value):
    """Resolve "${VAR}" references against the environment."""
    if isinstance(value, str) and value.startswith("${") and value.endswith("}"):
        return os.getenv(value[2:-1])
    if isinstance(value, list):
        return [_resolve_env(v) for v in value]
    if isinstance(value, dict):
        return {k: _resolve_env(v) for k, v in value.items()}
    return value


def find_config_path() -> Path | None:
    """Locate q2n.json: $Q2N_CONFIG, then the working directory, then the repository root."""
    explicit = os.getenv("Q2N_CONFIG")
    if explicit:
        return Path(explicit)

    # Assuming this file is in src/q2n/, root is ../../
    root_dir = Path(__file__).parent.parent.parent
    for p in (Path.cwd() / CONFIG_FILENAME, root_dir / CONFIG_FILENAME):
        if p.exists():
            return p
    return None


def load_config(path: Path | str | None = None) -> dict:
    """Load the raw JSON config; a missing file yields {}."""
    config_path = Path(path) if path else find_config_path()
    if not config_path:
        return {}
    try:
        with open(config_path, "r", encoding="utf-8") as f:
            return _resolve_env(json.load(f))
    except FileNotFoundError:
        raise ArgumentError(f"config file not found: {config_path}")
    except json.JSONDecodeError as e:
        raise ArgumentError(f"invalid JSON in {config_path}: {e}")


def _group_value(raw):
    if raw is None or raw in ("row", "per-row"):
        return None
    return int(raw)


def load_defaults(path: Path | str | None = None) -> Defaults:
    """Merge q2n.json over the built-in defaults."""
    cfg = load_config(path)
    base = Defaults()
    section = cfg.get("defaults", {})
    updates = {}
    for key, attr in (
        ("bits", "bits"),
        ("t", "t"),
        ("lambda", "lambda_reg"),
        ("selector", "selector"),
        ("quantizer", "quantizer"),
        ("exclude_top", "exclude_top"),
        ("damp", "damp"),
        ("seed", "seed"),
    ):
        if section.get(key) is not None:
            updates[attr] = type(getattr(base, attr))(section[key])
    if "group" in section:
        updates["group"] = _group_value(section["group"])

    sweep = cfg.get("sweep", {})
    if sweep.get("t_grid"):
        updates["t_grid"] = tuple(float(v) for v in sweep["t_grid"])
    if sweep.get("lambda_grid"):
        updates["lambda_grid"] = tuple(float(v) for v in sweep["lambda_grid"])
    bench = cfg.get("bench", {})
    if bench.get("sizes"):
        updates["bench_sizes"] = tuple(int(v) for v in bench["sizes"])
    compare = cfg.get("compare_bp", {})
    if compare.get("epochs"):
        updates["bp_epochs"] = tuple(int(v) for v in compare["epochs"])
    if compare.get("lrs"):
        updates["bp_lrs"] = tuple(float(v) for v in compare["lrs"])

    return replace(base, **updates)


def get_thread_cap() -> int:
    """Worker cap from Q2N_THREADS (default 1)."""
    raw = os.getenv("Q2N_THREADS", "").strip()
    if not raw:
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise ArgumentError(f"Q2N_THREADS must be a positive integer, got {raw!r}")
    if value < 1:
        raise ArgumentError(f"Q2N_THREADS must be a positive integer, got {raw!r}")
    return value


def get_log_level(default: str = "WARNING") -> str:
    return os.getenv("Q2N_LOG_LEVEL", default).upper()
