"""Diagnostic CSV emission and figure rendering for calibration runs.

Every figure has a CSV twin carrying exactly the plotted numbers; figures are
SVG with fixed metadata and a fixed id salt so reruns are byte-identical.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import date
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .calibration import (
    CalibrationResult,
    fit_ar1,
    fit_linear,
    fit_power_law,
    fit_quadratic,
    innovations,
)
from .kernels import flat_kernel, index_values, powerlaw_kernel
from .market_data import JointSeries

matplotlib.rcParams["svg.hashsalt"] = "kernelvol"
_SVG_META = {"Date": None}

MA_LAGS = (50, 100, 200, 250)


def _write_csv(path: Path, header: list[str], rows, comment: str = "") -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _save(fig, path: Path, comment: str = "") -> None:
    meta = dict(_SVG_META)
    if comment:
        meta["Description"] = comment
    fig.savefig(path, format="svg", metadata=meta)
    plt.close(fig)


@dataclass(frozen=True)
class ReportPaths:
    csvs: tuple[Path, ...]
    figures: tuple[Path, ...]


def emit_report(
    data: JointSeries,
    result: CalibrationResult,
    out_dir: str | Path,
    comment: str = "",
    render_figures: bool = True,
    period_years: int = 5,
) -> ReportPaths:
    """Write the calibration diagnostics: scatter clouds, per-period lines,
    moving-average baselines, weight curves, innovations, and the
    autoregression of the innovations."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csvs: list[Path] = []
    figures: list[Path] = []
    n = result.kernel.n

    # absolute-level scatter
    p = out / "report_scatter_absolute.csv"
    _write_csv(p, ["date", "spx", "vix"],
               [(d.isoformat(), repr(float(s)), repr(float(v)))
                for d, s, v in zip(data.dates, data.spx, data.vix)], comment)
    csvs.append(p)

    # linear fit per multi-year period
    rows = []
    first, last = data.dates[0].year, data.dates[-1].year
    for y0 in range(first, last + 1, period_years):
        try:
            window = data.slice(date(y0, 1, 1), date(y0 + period_years, 1, 1))
            fit = fit_linear(window.spx, window.vix)
        except ValueError:
            continue
        rows.append((f"{y0}-{y0 + period_years}", repr(fit.intercept), repr(fit.slope), repr(fit.r2)))
    p = out / "report_linear_periods.csv"
    _write_csv(p, ["period", "intercept", "slope", "r2"], rows, comment)
    csvs.append(p)

    # flat moving-average baselines (zero-intercept quadratic)
    rows = []
    for lag in MA_LAGS:
        if len(data) <= lag + 10:
            continue
        idx = index_values(data.spx, flat_kernel(lag).weights)
        qf = fit_quadratic(idx, data.vix[lag:], force_zero_intercept=True)
        rows.append((lag, repr(qf.a), repr(qf.b), repr(qf.c), repr(qf.r2)))
    p = out / "report_ma_fits.csv"
    _write_csv(p, ["lag", "a", "b", "c", "r2"], rows, comment)
    csvs.append(p)

    # optimized weights and their log-quadratic shape fit
    weights = result.kernel.weights
    p = out / "report_weights.csv"
    _write_csv(p, ["lag", "weight"],
               [(j, repr(float(w))) for j, w in enumerate(weights, start=1)], comment)
    csvs.append(p)
    params, score = fit_power_law(result.kernel)
    shape = powerlaw_kernel(params, n)
    p = out / "report_weights_powerlaw.csv"
    _write_csv(p, ["p0", "p1", "p2", "score"],
               [(repr(params[0]), repr(params[1]), repr(params[2]), repr(score))], comment)
    csvs.append(p)

    # index series and fitted cloud
    idx = index_values(data.spx, weights)
    idx_dates = data.dates[n:]
    pred = np.asarray(result.fit(idx))
    p = out / "report_index.csv"
    _write_csv(p, ["date", "index", "vix", "predicted_vix"],
               [(d.isoformat(), repr(float(i)), repr(float(v)), repr(float(pv)))
                for d, i, v, pv in zip(idx_dates, idx, data.vix[n:], pred)], comment)
    csvs.append(p)

    # innovations and their daily autoregression
    innov = innovations(data, result.kernel, result.fit)
    p = out / "report_innovations.csv"
    _write_csv(p, ["date", "innovation"],
               [(d.isoformat(), repr(float(v))) for d, v in zip(idx_dates, innov)], comment)
    csvs.append(p)
    ar = fit_ar1(innov)
    p = out / "report_ar1.csv"
    _write_csv(p, ["phi", "sigma", "r2"],
               [(repr(ar.phi), repr(ar.sigma), repr(ar.r2))], comment)
    csvs.append(p)

    if render_figures:
        figures = _render_figures(out, data, result, idx, pred, innov, ar.phi, weights, shape, comment)

    return ReportPaths(csvs=tuple(csvs), figures=tuple(figures))


def _render_figures(out, data, result, idx, pred, innov, phi, weights, shape, comment) -> list[Path]:
    paths: list[Path] = []

    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.scatter(data.spx, data.vix, s=2, alpha=0.3)
    ax.set_xlabel("spot level")
    ax.set_ylabel("vol index")
    ax.set_title("vol index vs absolute spot level")
    p = out / "fig_scatter_absolute.svg"
    _save(fig, p, comment)
    paths.append(p)

    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.scatter(idx, data.vix[result.kernel.n :], s=2, alpha=0.3, label="observed")
    order = np.argsort(idx)
    ax.plot(idx[order], pred[order], color="crimson", lw=1.5, label="quadratic fit")
    ax.set_xlabel("dimensionless index")
    ax.set_ylabel("vol index")
    ax.legend()
    ax.set_title(f"optimized kernel fit, r2 = {result.in_sample_r2:.2f}")
    p = out / "fig_scatter_index.svg"
    _save(fig, p, comment)
    paths.append(p)

    fig, ax = plt.subplots(figsize=(7, 4.5))
    lags = np.arange(1, weights.size + 1)
    ax.plot(lags, weights, lw=1.0, label="optimized")
    ax.plot(lags, shape.weights, lw=1.0, ls="--", label="log-quadratic shape")
    ax.set_xlabel("lag (days)")
    ax.set_ylabel("weight")
    ax.legend()
    ax.set_title("kernel weights by lag")
    p = out / "fig_weights.svg"
    _save(fig, p, comment)
    paths.append(p)

    fig, ax = plt.subplots(figsize=(8, 3.5))
    ax.plot(np.arange(innov.size), innov, lw=0.7)
    ax.set_xlabel("observation")
    ax.set_ylabel("log innovation")
    ax.set_title("innovations unexplained by the index map")
    p = out / "fig_innovations.svg"
    _save(fig, p, comment)
    paths.append(p)

    fig, ax = plt.subplots(figsize=(5.5, 5))
    ax.scatter(innov[:-1], innov[1:], s=3, alpha=0.4)
    lim = np.array([innov.min(), innov.max()])
    ax.plot(lim, phi * lim, color="crimson", lw=1.2, label=f"slope {phi:.4f}")
    ax.set_xlabel("innovation (t)")
    ax.set_ylabel("innovation (t+1)")
    ax.legend()
    ax.set_title("daily autoregression of innovations")
    p = out / "fig_ar1.svg"
    _save(fig, p, comment)
    paths.append(p)

    return paths
