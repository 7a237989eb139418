"""Loading, validation, alignment, and slicing of daily index histories."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

TRADING_DAYS_PER_YEAR = 252
DT_DAILY = 1.0 / TRADING_DAYS_PER_YEAR


@dataclass(frozen=True, eq=False)
class MarketSeries:
    """Daily history of one positive-valued index.

    Dates are strictly increasing calendar dates; values are positive and
    finite, one per date.
    """

    dates: tuple[date, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "dates", tuple(self.dates))
        if len(self.dates) != values.size:
            raise ValueError(
                f"dates ({len(self.dates)}) and values ({values.size}) differ in length"
            )
        if values.size == 0:
            raise ValueError("series is empty")
        if not np.all(np.isfinite(values)):
            raise ValueError("series contains non-finite values")
        if np.any(values <= 0.0):
            raise ValueError("series contains non-positive values")
        for prev, cur in zip(self.dates, self.dates[1:]):
            if cur <= prev:
                raise ValueError(f"dates not strictly increasing at {cur}")

    def __len__(self) -> int:
        return len(self.dates)


@dataclass(frozen=True, eq=False)
class JointSeries:
    """Date-aligned daily spot-index and volatility-index history.

    ``vix`` is in volatility points (20.0 means 20%). ``dropped_spx`` and
    ``dropped_vix`` record how many rows each input lost during alignment.
    """

    dates: tuple[date, ...]
    spx: np.ndarray
    vix: np.ndarray
    dropped_spx: int = field(default=0, compare=False)
    dropped_vix: int = field(default=0, compare=False)

    def __post_init__(self) -> None:
        spx = np.asarray(self.spx, dtype=float)
        vix = np.asarray(self.vix, dtype=float)
        object.__setattr__(self, "spx", spx)
        object.__setattr__(self, "vix", vix)
        object.__setattr__(self, "dates", tuple(self.dates))
        if not (len(self.dates) == spx.size == vix.size):
            raise ValueError("dates, spx, and vix must have equal length")
        if spx.size == 0:
            raise ValueError("joint series is empty")
        for name, arr in (("spx", spx), ("vix", vix)):
            if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
                raise ValueError(f"{name} contains non-positive or non-finite values")
        for prev, cur in zip(self.dates, self.dates[1:]):
            if cur <= prev:
                raise ValueError(f"dates not strictly increasing at {cur}")

    def __len__(self) -> int:
        return len(self.dates)

    def slice(self, start: date, end: date) -> "JointSeries":
        """Rows with ``start <= date < end``. Raises on an empty window."""
        if start >= end:
            raise ValueError(f"start {start} must precede end {end}")
        keep = [i for i, d in enumerate(self.dates) if start <= d < end]
        if not keep:
            raise ValueError(f"empty slice [{start}, {end})")
        idx = np.asarray(keep)
        return JointSeries(
            dates=tuple(self.dates[i] for i in keep),
            spx=self.spx[idx],
            vix=self.vix[idx],
        )


def load_series(path: str | Path, column: str) -> MarketSeries:
    """Read one named column of a CSV with header ``date,<column>,...``.

    Rows with an empty, non-numeric, non-finite, or non-positive value are
    skipped; their file line numbers are reported through a warning. Structural
    problems (missing file/column, bad or non-monotone dates) raise.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"data file not found: {path}")
    dates: list[date] = []
    values: list[float] = []
    rejected: list[int] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        if "date" not in header:
            raise ValueError(f"{path}: missing required column 'date'")
        if column not in header:
            raise ValueError(f"{path}: missing required column '{column}'")
        for lineno, row in enumerate(reader, start=2):
            raw_date = (row.get("date") or "").strip()
            try:
                d = date.fromisoformat(raw_date)
            except ValueError:
                raise ValueError(f"{path}: unparsable date '{raw_date}' at line {lineno}") from None
            raw_val = (row.get(column) or "").strip()
            try:
                v = float(raw_val)
            except ValueError:
                v = float("nan")
            if not np.isfinite(v) or v <= 0.0:
                rejected.append(lineno)
                continue
            if dates and d <= dates[-1]:
                raise ValueError(
                    f"{path}: date {d} at line {lineno} is not after the previous row"
                )
            dates.append(d)
            values.append(v)
    if rejected:
        logger.warning(
            "%s: rejected %d row(s) with empty or non-positive '%s' (lines %s)",
            path, len(rejected), column, ", ".join(map(str, rejected)),
        )
    if not dates:
        raise ValueError(f"{path}: no usable rows for column '{column}'")
    return MarketSeries(dates=tuple(dates), values=np.asarray(values))


def align(spx: MarketSeries, vix: MarketSeries) -> JointSeries:
    """Inner-join two series on dates, dropping unmatched rows on either side."""
    vix_by_date = {d: v for d, v in zip(vix.dates, vix.values)}
    dates: list[date] = []
    s_vals: list[float] = []
    v_vals: list[float] = []
    for d, s in zip(spx.dates, spx.values):
        v = vix_by_date.get(d)
        if v is not None:
            dates.append(d)
            s_vals.append(s)
            v_vals.append(v)
    if not dates:
        raise ValueError("empty intersection: the two series share no dates")
    return JointSeries(
        dates=tuple(dates),
        spx=np.asarray(s_vals),
        vix=np.asarray(v_vals),
        dropped_spx=len(spx) - len(dates),
        dropped_vix=len(vix) - len(dates),
    )


def write_joint(series: JointSeries, path: str | Path) -> None:
    """Write a joint series as ``date,spx,vix`` CSV with round-trippable floats."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "spx", "vix"])
        for d, s, v in zip(series.dates, series.spx, series.vix):
            writer.writerow([d.isoformat(), repr(float(s)), repr(float(v))])


def load_joint(path: str | Path) -> JointSeries:
    """Read back a ``date,spx,vix`` CSV written by :func:`write_joint`."""
    return align(load_series(path, "spx"), load_series(path, "vix"))
