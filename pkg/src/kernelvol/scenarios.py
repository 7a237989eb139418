"""Joint spot/vol-index scenario generation and distributional validation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path

import numpy as np
from scipy.stats import kurtosis, ks_2samp

from .calibration import ARFit, QuadraticFit
from .kernels import Kernel, flat_kernel, index_values
from .market_data import TRADING_DAYS_PER_YEAR, JointSeries
from .pricer import ModelParams
from .rng import block_generator, iter_path_blocks

VIX_FLOOR = 1.0  # vol points, applied to the quadratic before the innovation factor


@dataclass(frozen=True, eq=False)
class ScenarioSet:
    """Simulated joint spot / vol-index / innovation paths on a daily grid."""

    grid: tuple[date, ...]
    spx_paths: np.ndarray
    vix_paths: np.ndarray
    y_paths: np.ndarray
    seed: int

    def __post_init__(self) -> None:
        for name in ("spx_paths", "vix_paths", "y_paths"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        shape = self.spx_paths.shape
        if self.vix_paths.shape != shape or self.y_paths.shape != shape:
            raise ValueError("path arrays must share one shape")
        if shape[1] != len(self.grid):
            raise ValueError("grid length must match the path length")
        if np.any(self.spx_paths <= 0.0) or np.any(self.vix_paths <= 0.0):
            raise ValueError("spot and vol-index paths must stay positive")

    @property
    def n_paths(self) -> int:
        return self.spx_paths.shape[0]


def _weekday_grid(start: date, n_points: int) -> tuple[date, ...]:
    out = []
    d = start
    while len(out) < n_points:
        if d.weekday() < 5:
            out.append(d)
        d += timedelta(days=1)
    return tuple(out)


def generate(
    model: ModelParams,
    fit: QuadraticFit,
    ar: ARFit,
    horizon: float,
    n: int,
    seed: int,
    start: date = date(2025, 1, 5),
    real_world_drift: float | None = None,
) -> ScenarioSet:
    """Simulate joint trajectories consistent with the calibrated model.

    The spot follows the model's Euler scheme with local volatility scaled by
    the innovation factor ``exp(y)``; ``y`` itself follows the fitted daily
    autoregression. The vol index is reconstructed as the (floored) quadratic
    prediction times ``exp(y)``. The drift is risk-neutral ``r - q`` unless
    ``real_world_drift`` overrides it.
    """
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")
    if n < 1:
        raise ValueError("need at least one path")
    n_steps = int(round(horizon * TRADING_DAYS_PER_YEAR))
    if n_steps < 1:
        raise ValueError("horizon shorter than one trading day")
    dt = 1.0 / TRADING_DAYS_PER_YEAR
    sdt = math.sqrt(dt)
    drift = (model.r - model.q) if real_world_drift is None else real_world_drift
    lv = model.localvol
    rho = model.rho
    srho = math.sqrt(1.0 - rho * rho)

    spx = np.empty((n, n_steps + 1))
    yarr = np.empty((n, n_steps + 1))
    vix = np.empty((n, n_steps + 1))
    for block, bstart, size in iter_path_blocks(n):
        gen_w = block_generator(seed, 2 * block, 0)
        gen_b = block_generator(seed, 2 * block + 1, 0)
        s = np.full(size, model.s0)
        a = np.full(size, model.a0)
        y = np.full(size, model.ou.y0)
        rows = slice(bstart, bstart + size)
        spx[rows, 0] = s
        yarr[rows, 0] = y
        vix[rows, 0] = np.maximum(fit(s / a), VIX_FLOOR) * np.exp(y)
        for i in range(n_steps):
            eps_w = gen_w.standard_normal(size)
            eps_b = rho * eps_w + srho * gen_b.standard_normal(size)
            sigma = lv(s / a) * np.exp(y)
            s_new = s * (1.0 + drift * dt + sigma * eps_b * sdt)
            s_new = np.maximum(s_new, 1e-8 * model.s0)
            a = a + model.kappa_kernel * (s - a) * dt
            s = s_new
            y = ar.phi * y + ar.sigma * eps_w
            spx[rows, i + 1] = s
            yarr[rows, i + 1] = y
            vix[rows, i + 1] = np.maximum(fit(s / a), VIX_FLOOR) * np.exp(y)
    return ScenarioSet(
        grid=_weekday_grid(start, n_steps + 1),
        spx_paths=spx,
        vix_paths=vix,
        y_paths=yarr,
        seed=seed,
    )


@dataclass(frozen=True)
class ValidationReport:
    """Distributional comparison of simulated paths against a reference history."""

    ks_index: float | None
    acf1_log_vix_sim: float | None
    acf1_log_vix_ref: float | None
    kurtosis_returns_sim: float | None
    kurtosis_returns_ref: float | None
    ks_threshold: float
    flags: tuple[str, ...] = field(default=())

    @property
    def index_consistent(self) -> bool | None:
        if self.ks_index is None:
            return None
        return self.ks_index < self.ks_threshold

    def to_json(self, extra: dict | None = None) -> str:
        payload = {
            "ks_index": self.ks_index,
            "ks_threshold": self.ks_threshold,
            "index_consistent": self.index_consistent,
            "acf1_log_vix_sim": self.acf1_log_vix_sim,
            "acf1_log_vix_ref": self.acf1_log_vix_ref,
            "kurtosis_returns_sim": self.kurtosis_returns_sim,
            "kurtosis_returns_ref": self.kurtosis_returns_ref,
            "flags": list(self.flags),
        }
        if extra:
            payload.update(extra)
        return json.dumps(payload, sort_keys=True)

    def write_csv(self, path: str | Path, comment: str = "") -> None:
        rows = [
            ("ks_index", self.ks_index),
            ("acf1_log_vix_sim", self.acf1_log_vix_sim),
            ("acf1_log_vix_ref", self.acf1_log_vix_ref),
            ("kurtosis_returns_sim", self.kurtosis_returns_sim),
            ("kurtosis_returns_ref", self.kurtosis_returns_ref),
        ]
        lines = ([f"# {comment}"] if comment else []) + ["statistic,value"]
        lines += [f"{k},{'' if v is None else repr(float(v))}" for k, v in rows]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _acf1(x: np.ndarray) -> float | None:
    x = x - x.mean()
    denom = float(x @ x)
    if denom == 0.0:
        return None
    return float(x[:-1] @ x[1:] / denom)


def validate(
    scenarios: ScenarioSet,
    reference: JointSeries,
    kernel: Kernel | None = None,
    ks_threshold: float = 0.1,
) -> ValidationReport:
    """Compare simulated and historical distributions.

    Uses one fixed kernel (flat 250-day by default, shortened when the data
    cannot support it) to compute the dimensionless index on both sides, so
    the comparison is symmetric. Quantities that cannot be computed are
    flagged rather than raised.
    """
    flags: list[str] = []
    if kernel is None:
        n_lag = min(250, len(reference) - 1, scenarios.spx_paths.shape[1] - 1)
        if n_lag < 1:
            flags.append("reference_too_short_for_index")
            kernel = None
        else:
            kernel = flat_kernel(n_lag)

    ks_index = None
    if kernel is not None and scenarios.spx_paths.shape[1] > kernel.n and len(reference) > kernel.n:
        sim_index = np.concatenate(
            [index_values(path, kernel.weights) for path in scenarios.spx_paths]
        )
        ref_index = index_values(reference.spx, kernel.weights)
        ks_index = float(ks_2samp(sim_index, ref_index).statistic)
    else:
        flags.append("index_comparison_skipped")

    log_vix_sim = np.log(scenarios.vix_paths)
    acf_sim_vals = [a for a in (_acf1(row) for row in log_vix_sim) if a is not None]
    acf_sim = float(np.mean(acf_sim_vals)) if acf_sim_vals else None
    if acf_sim is None:
        flags.append("vix_autocorrelation_degenerate")
    acf_ref = _acf1(np.log(reference.vix)) if len(reference) > 2 else None
    if acf_ref is None:
        flags.append("reference_vix_autocorrelation_unavailable")

    sim_rets = np.diff(np.log(scenarios.spx_paths), axis=1).ravel()
    kurt_sim = float(kurtosis(sim_rets)) if sim_rets.size > 3 else None
    ref_rets = np.diff(np.log(reference.spx))
    kurt_ref = float(kurtosis(ref_rets)) if ref_rets.size > 3 else None
    if kurt_sim is None or kurt_ref is None:
        flags.append("kurtosis_unavailable")

    return ValidationReport(
        ks_index=ks_index,
        acf1_log_vix_sim=acf_sim,
        acf1_log_vix_ref=acf_ref,
        kurtosis_returns_sim=kurt_sim,
        kurtosis_returns_ref=kurt_ref,
        ks_threshold=ks_threshold,
        flags=tuple(flags),
    )


def write_scenario_csvs(scenarios: ScenarioSet, out_dir: str | Path, header_comment: str = "") -> None:
    """One CSV per quantity with rows ``path_id,t_index,value``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, arr in (("scenario_spx.csv", scenarios.spx_paths),
                      ("scenario_vix.csv", scenarios.vix_paths)):
        lines = []
        if header_comment:
            lines.append(f"# {header_comment}")
        lines.append("path_id,t_index,value")
        n_paths, n_pts = arr.shape
        for p in range(n_paths):
            row = arr[p]
            lines.extend(f"{p},{t},{row[t]!r}" for t in range(n_pts))
        (out / name).write_text("\n".join(lines) + "\n", encoding="utf-8")
