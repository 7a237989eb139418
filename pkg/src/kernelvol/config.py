"""Flat key-value run configuration for the command-line interface."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields
from datetime import date
from pathlib import Path


@dataclass
class RunConfig:
    """Everything a reproducible run needs, read from a ``key = value`` file.

    Paths are resolved relative to the config file's directory.
    """

    spx_csv: Path | None = None
    vix_csv: Path | None = None
    out_dir: Path = Path("out")
    in_sample_start: date | None = None
    in_sample_end: date | None = None
    out_sample_start: date | None = None
    out_sample_end: date | None = None
    kernel_lags: int = 250
    optimizer_budget: int = 600
    seed: int = 0
    rate: float = 0.0
    dividend_yield: float = 0.0
    correlation: float = 0.0
    kappa_kernel: float | None = None
    quantizer_allocation: tuple[int, ...] = (3,)
    quantizer_grid_steps: int = 252
    quantizer_horizon: float = 1.0
    engines: tuple[str, ...] = ("mc",)
    n_paths: int = 100_000
    scenario_horizon: float = 1.0
    scenario_paths: int = 100
    calibration_json: Path | None = None
    strikes: tuple[float, ...] = (0.8, 0.9, 1.0, 1.1, 1.2)
    render_figures: bool = True
    config_hash: str = ""
    source_text: str = ""

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        text = path.read_text(encoding="utf-8")
        base = path.parent
        known = {f.name for f in fields(cls)}
        cfg = cls()
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in known or key in ("config_hash", "source_text"):
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            setattr(cfg, key, _parse_value(key, value, base))
        cfg.config_hash = hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]
        cfg.source_text = text
        _check_windows(cfg)
        return cfg

    def require_data(self) -> tuple[Path, Path]:
        if self.spx_csv is None or self.vix_csv is None:
            raise ValueError("config must set spx_csv and vix_csv")
        for p in (self.spx_csv, self.vix_csv):
            if not p.exists():
                raise FileNotFoundError(f"data file not found: {p}")
        return self.spx_csv, self.vix_csv


def _parse_value(key: str, value: str, base: Path):
    if key in ("spx_csv", "vix_csv", "out_dir", "calibration_json"):
        p = Path(value)
        return p if p.is_absolute() else base / p
    if key in ("in_sample_start", "in_sample_end", "out_sample_start", "out_sample_end"):
        return date.fromisoformat(value)
    if key in ("kernel_lags", "optimizer_budget", "seed", "n_paths",
               "quantizer_grid_steps", "scenario_paths"):
        return int(value)
    if key in ("rate", "dividend_yield", "correlation", "kappa_kernel",
               "quantizer_horizon", "scenario_horizon"):
        return float(value)
    if key == "quantizer_allocation":
        return tuple(int(v) for v in value.split(","))
    if key == "engines":
        return tuple(v.strip() for v in value.split(","))
    if key == "strikes":
        return tuple(float(v) for v in value.split(","))
    if key == "render_figures":
        return value.lower() in ("1", "true", "yes", "on")
    raise AssertionError(key)


def _check_windows(cfg: RunConfig) -> None:
    for lo, hi, label in (
        (cfg.in_sample_start, cfg.in_sample_end, "in_sample"),
        (cfg.out_sample_start, cfg.out_sample_end, "out_sample"),
    ):
        if lo is not None and hi is not None and lo >= hi:
            raise ValueError(f"{label} window is not well-ordered: {lo} >= {hi}")
