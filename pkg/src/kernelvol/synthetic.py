"""Synthetic joint histories with a known kernel and vol-index map.

Used by the shipped fixtures, the test suite, and quick demos: the generating
kernel and quadratic are known exactly, so recovery can be measured.
"""

from __future__ import annotations

from datetime import date, timedelta

import numpy as np

from .kernels import Kernel, index_values
from .market_data import JointSeries


def weekday_dates(start: date, count: int) -> tuple[date, ...]:
    out = []
    d = start
    while len(out) < count:
        if d.weekday() < 5:
            out.append(d)
        d += timedelta(days=1)
    return tuple(out)


def synthetic_joint(
    kernel: Kernel,
    coeffs: tuple[float, float, float],
    n_days: int,
    noise_sd: float = 0.0,
    seed: int = 0,
    s0: float = 100.0,
    vol_regimes: tuple[float, float] = (0.12, 0.26),
    regime_length: int = 500,
    start: date = date(1990, 1, 1),
) -> JointSeries:
    """Spot path with alternating calm/stressed vol regimes; vol index equal to
    the kernel quadratic of the index plus optional Gaussian noise.

    Regime switching widens the range of the dimensionless index, which keeps
    the quadratic coefficients statistically identifiable. The noisy vol index
    is floored just above zero to preserve positivity.
    """
    a, b, c = coeffs
    rng = np.random.default_rng(seed)
    dt = 1.0 / 252.0
    steps = np.arange(n_days)
    vols = np.where((steps // regime_length) % 2 == 0, vol_regimes[0], vol_regimes[1])
    z = rng.standard_normal(n_days)
    log_ret = vols * np.sqrt(dt) * z - 0.5 * vols**2 * dt
    log_ret[0] = 0.0
    spot = s0 * np.exp(np.cumsum(log_ret))
    idx = index_values(spot, kernel.weights)
    vix = a + b * idx + c * idx**2
    if np.any(vix <= 0.0):
        raise ValueError(
            "generating quadratic predicts non-positive vol on this path; "
            "tame the vol regimes or the coefficients"
        )
    if noise_sd > 0.0:
        vix = vix + noise_sd * rng.standard_normal(vix.size)
        vix = np.maximum(vix, 0.05)
    # rows before the kernel window carry the level at index 1 so files align
    head = np.full(kernel.n, float(a + b + c))
    return JointSeries(
        dates=weekday_dates(start, n_days),
        spx=spot,
        vix=np.concatenate([head, vix]),
    )


def synthetic_joint_bounded_index(
    kernel: Kernel,
    coeffs: tuple[float, float, float],
    n_days: int,
    noise_sd: float = 0.0,
    seed: int = 0,
    s0: float = 100.0,
    index_band: tuple[float, float] = (0.80, 1.16),
    reversion: float = 2.0,
    driver_vol: float = 2.2,
    start: date = date(1990, 1, 1),
) -> JointSeries:
    """Spot path reconstructed from a bounded dimensionless-index target.

    A mean-reverting driver is squashed into ``index_band`` and the spot is
    built by the exact recursion ``S_t = I_t * (weights . past spots)``, so
    the realized index equals the target to machine precision. Keeping the
    band inside the region where the generating quadratic stays positive makes
    arbitrarily long series valid for any seed.
    """
    a, b, c = coeffs
    lo, hi = index_band
    if not 0.0 < lo < hi:
        raise ValueError("index band must be positive and ordered")
    rng = np.random.default_rng(seed)
    dt = 1.0 / 252.0
    n = kernel.n
    x = np.empty(n_days - n)
    x[0] = 0.0
    z = rng.standard_normal(n_days - n)
    for t in range(x.size - 1):
        x[t + 1] = x[t] - reversion * x[t] * dt + driver_vol * np.sqrt(dt) * z[t]
    idx = lo + (hi - lo) / (1.0 + np.exp(-x))
    spot = np.empty(n_days)
    spot[:n] = s0
    w = kernel.weights
    for t in range(n, n_days):
        spot[t] = idx[t - n] * float(np.dot(w, spot[t - n : t][::-1]))
    vix = a + b * idx + c * idx**2
    if np.any(vix <= 0.0):
        raise ValueError("index band leaves the generating quadratic non-positive")
    if noise_sd > 0.0:
        vix = vix + noise_sd * rng.standard_normal(vix.size)
        vix = np.maximum(vix, 0.05)
    head = np.full(n, float(a + b + c))
    return JointSeries(
        dates=weekday_dates(start, n_days),
        spx=spot,
        vix=np.concatenate([head, vix]),
    )
