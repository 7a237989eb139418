"""Averaging kernels on the lag simplex and the dimensionless spot index.

A kernel is a vector of nonnegative weights over past-day lags, summing to
one. Applied to a price history it produces a weighted average of past spots;
the ratio of today's spot to that average is a scale-free index whose natural
level is 1. Weights are stored by lag: ``weights[0]`` multiplies yesterday's
spot, ``weights[j-1]`` the spot ``j`` days back.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

import numpy as np

from .market_data import MarketSeries

SIMPLEX_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Kernel:
    """Nonnegative lag weights summing to one.

    ``kind`` and ``params`` record which constructor produced the weights;
    they carry no numerical meaning.
    """

    weights: np.ndarray
    kind: str = field(default="custom", compare=False)
    params: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        if w.ndim != 1 or w.size < 1:
            raise ValueError("kernel needs at least one weight")
        if not np.all(np.isfinite(w)):
            raise ValueError("kernel weights must be finite")
        if np.any(w < 0.0):
            raise ValueError("kernel weights must be nonnegative")
        if abs(w.sum() - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"kernel weights sum to {w.sum()!r}, expected 1")

    @property
    def n(self) -> int:
        return self.weights.size

    def mean_lag(self) -> float:
        """Average lag in days, weighting lag j by weights[j-1]."""
        lags = np.arange(1, self.n + 1, dtype=float)
        return float(np.dot(lags, self.weights))

    def to_json(self) -> str:
        payload = {
            "type": self.kind,
            "params": list(self.params),
            "n": self.n,
            "weights": [float(w) for w in self.weights],
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Kernel":
        payload = json.loads(text)
        return cls(
            weights=np.asarray(payload["weights"], dtype=float),
            kind=payload.get("type", "custom"),
            params=tuple(payload.get("params", ())),
        )

    def write_csv(self, path: str | Path) -> None:
        lines = ["lag,weight"]
        lines += [f"{j},{float(w)!r}" for j, w in enumerate(self.weights, start=1)]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def read_csv(cls, path: str | Path) -> "Kernel":
        rows = Path(path).read_text(encoding="utf-8").strip().splitlines()
        if not rows or rows[0].strip() != "lag,weight":
            raise ValueError(f"{path}: expected header 'lag,weight'")
        weights = [float(r.split(",")[1]) for r in rows[1:]]
        return cls(weights=np.asarray(weights))


@dataclass(frozen=True, eq=False)
class IndexSeries:
    """Dimensionless spot-over-average index, defined once the lag window fills."""

    dates: tuple[date, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "dates", tuple(self.dates))
        if len(self.dates) != v.size:
            raise ValueError("dates and values differ in length")
        if np.any(v <= 0.0) or not np.all(np.isfinite(v)):
            raise ValueError("index values must be positive and finite")

    def __len__(self) -> int:
        return len(self.dates)


def flat_kernel(n: int) -> Kernel:
    """Simple moving average over the last n days."""
    if n < 1:
        raise ValueError("kernel length must be at least 1")
    return Kernel(weights=np.full(n, 1.0 / n), kind="flat", params=())


def exp_kernel(kappa_kernel: float, n: int) -> Kernel:
    """Exponentially decaying weights, ``weights[j-1] ∝ exp(-kappa_kernel * j)``.

    ``kappa_kernel`` is a per-day decay rate; 0 degenerates to the flat kernel.
    """
    if n < 1:
        raise ValueError("kernel length must be at least 1")
    if kappa_kernel < 0.0:
        raise ValueError("decay rate must be nonnegative")
    lags = np.arange(1, n + 1, dtype=float)
    logw = -kappa_kernel * lags
    w = np.exp(logw - logw.max())
    return Kernel(weights=w / w.sum(), kind="exponential", params=(float(kappa_kernel),))


def powerlaw_kernel(p: tuple[float, float, float], n: int) -> Kernel:
    """Log-quadratic decay in log-lag: ``weights[j-1] ∝ exp(p0 + p1·ln j + p2·ln²j)``."""
    if n < 1:
        raise ValueError("kernel length must be at least 1")
    p0, p1, p2 = (float(x) for x in p)
    logj = np.log(np.arange(1, n + 1, dtype=float))
    logw = p0 + p1 * logj + p2 * logj**2
    if not np.all(np.isfinite(logw)):
        raise ValueError("power-law parameters produce non-finite weights")
    w = np.exp(logw - logw.max())
    return Kernel(weights=w / w.sum(), kind="powerlaw", params=(p0, p1, p2))


def softmax_weights(psi: np.ndarray) -> Kernel:
    """Map unconstrained reals onto the simplex via a stabilized softmax."""
    psi = np.asarray(psi, dtype=float)
    if psi.ndim != 1 or psi.size < 1:
        raise ValueError("psi must be a non-empty 1-d array")
    if not np.all(np.isfinite(psi)):
        raise ValueError("psi must be finite")
    e = np.exp(psi - psi.max())
    return Kernel(weights=e / e.sum(), kind="softmax", params=())


def index_values(spot: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Core index computation on raw arrays.

    Returns ``spot[t] / sum_j weights[j-1] * spot[t-j]`` for ``t = n .. len-1``.
    """
    spot = np.asarray(spot, dtype=float)
    weights = np.asarray(weights, dtype=float)
    n = weights.size
    if spot.size <= n:
        raise ValueError(f"need more than {n} prices, got {spot.size}")
    denom = np.convolve(spot, weights, mode="valid")[:-1]
    return spot[n:] / denom


def scale_index(prices: MarketSeries, kernel: Kernel) -> IndexSeries:
    """Spot divided by its kernel-weighted past average, per date."""
    vals = index_values(prices.values, kernel.weights)
    return IndexSeries(dates=prices.dates[kernel.n :], values=vals)


def ewma_state_update(a: float, s: float, kappa_kernel: float, dt: float) -> float:
    """One explicit step of the running average ``dA = kappa (S - A) dt``.

    ``kappa_kernel`` is per year here; the step is stable only for
    ``kappa_kernel * dt < 1``.
    """
    if a <= 0.0 or s <= 0.0:
        raise ValueError("spot and average state must be positive")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if kappa_kernel * dt >= 1.0:
        raise ValueError(f"unstable step: kappa*dt = {kappa_kernel * dt} >= 1")
    return a + kappa_kernel * (s - a) * dt
