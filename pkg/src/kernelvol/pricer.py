"""Derivative pricing under the path-dependent local stochastic vol model.

Spot dynamics conditioned on a realized volatility-factor path ``y``:

    dS/S = ((r - q) + mu_t sigma_loc) dt + sig_t sigma_loc dB,
    mu_t  = (rho / nu) (y'_t + kappa_y y_t) exp(y_t),
    sig_t = sqrt(1 - rho^2) exp(y_t),

with ``sigma_loc`` a clamped quadratic of the dimensionless index
``I = S / A`` and ``A`` the exponentially weighted running spot average,
``dA = kappa_kernel (S - A) dt``. Unconditional prices are companion-weighted
sums of conditional prices over the paths of a factor quantizer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.stats import norm

from .quantizer import OUParams, QuantizerSet
from .rng import block_generator, iter_path_blocks

TRADING_DAYS = 252
SPOT_FLOOR_FRACTION = 1e-8


@dataclass(frozen=True)
class LocalVolFn:
    """Quadratic local volatility of the dimensionless index, clamped twice.

    Coefficients are in vol points; ``scale`` converts to decimal volatility.
    The index argument is clamped to ``[i_lo, i_hi]`` (the historically
    observed range padded by 20% when produced by calibration) before the
    quadratic, and the output volatility to ``[floor, cap]``: the fitted
    parabola turns non-physical far outside the observed range.
    """

    a: float
    b: float
    c: float
    scale: float = 0.01
    floor: float = 0.01
    cap: float = 2.0
    i_lo: float = 0.5
    i_hi: float = 1.5

    def __post_init__(self) -> None:
        if not self.floor < self.cap:
            raise ValueError("floor must lie below cap")
        if not self.i_lo < self.i_hi:
            raise ValueError("i_lo must lie below i_hi")

    def __call__(self, index: np.ndarray | float) -> np.ndarray | float:
        i = np.clip(index, self.i_lo, self.i_hi)
        vol = self.scale * (self.a + self.b * i + self.c * np.square(i))
        return np.clip(vol, self.floor, self.cap)

    @staticmethod
    def flat(vol: float) -> "LocalVolFn":
        """Constant decimal volatility, for reference configurations."""
        return LocalVolFn(a=100.0 * vol, b=0.0, c=0.0, floor=0.0, cap=max(2.0, 2.0 * vol))


@dataclass(frozen=True)
class ModelParams:
    """Complete pricing model state."""

    r: float
    q: float
    rho: float
    ou: OUParams
    kappa_kernel: float
    localvol: LocalVolFn
    s0: float
    a0: float

    def __post_init__(self) -> None:
        if abs(self.rho) > 1.0:
            raise ValueError("correlation must lie in [-1, 1]")
        if self.s0 <= 0.0 or self.a0 <= 0.0:
            raise ValueError("spot and average state must be positive")


def default_model_params(s0: float = 100.0, r: float = 0.0, q: float = 0.0) -> ModelParams:
    """Reference model: zero spot-vol correlation, fast-reverting factor,
    one-year-scale spot averaging, and a representative index-quadratic."""
    # the index clamp stays inside the region where the quadratic is positive,
    # keeping the vol function steep but smooth for every engine
    return ModelParams(
        r=r,
        q=q,
        rho=0.0,
        ou=OUParams(kappa_y=4.53, nu=0.0417),
        kappa_kernel=2.0,
        localvol=LocalVolFn(a=75.02, b=3.47, c=-57.13, i_lo=0.75, i_hi=1.15),
        s0=s0,
        a0=s0,
    )


@dataclass(frozen=True)
class VanillaCall:
    strike: float
    maturity: float

    def __post_init__(self) -> None:
        if self.strike <= 0.0 or self.maturity <= 0.0:
            raise ValueError("strike and maturity must be positive")


@dataclass(frozen=True)
class VanillaPut:
    strike: float
    maturity: float

    def __post_init__(self) -> None:
        if self.strike <= 0.0 or self.maturity <= 0.0:
            raise ValueError("strike and maturity must be positive")


@dataclass(frozen=True)
class UpAndOutCall:
    """Call extinguished when the spot touches the barrier, monitored daily."""

    strike: float
    barrier: float
    maturity: float

    def __post_init__(self) -> None:
        if self.strike <= 0.0 or self.maturity <= 0.0:
            raise ValueError("strike and maturity must be positive")
        if self.barrier <= self.strike:
            raise ValueError("barrier must exceed the strike")


@dataclass(frozen=True)
class VarianceSwap:
    maturity: float

    def __post_init__(self) -> None:
        if self.maturity <= 0.0:
            raise ValueError("maturity must be positive")


@dataclass(frozen=True)
class VolatilitySwap:
    maturity: float

    def __post_init__(self) -> None:
        if self.maturity <= 0.0:
            raise ValueError("maturity must be positive")


Product = Union[VanillaCall, VanillaPut, UpAndOutCall, VarianceSwap, VolatilitySwap]


@dataclass(frozen=True, eq=False)
class ConditionalCoeffs:
    """Drift and vol multipliers of the spot conditioned on a factor path."""

    mu: np.ndarray
    sig: np.ndarray


@dataclass(frozen=True, eq=False)
class PriceResult:
    """Assembled price with statistical error and per-path conditionals.

    For currency-valued products ``value`` is exactly the companion-weighted
    sum of ``per_quantizer``. Swap quotes are a nonlinear transform of the
    weighted conditional expectations; ``per_quantizer`` then holds the linear
    conditional quantity (expected realized variance in vol-points² for
    variance swaps, conditional quote for volatility swaps).
    """

    value: float
    std_error: float
    per_quantizer: np.ndarray
    n_paths: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "per_quantizer", np.asarray(self.per_quantizer, dtype=float))
        if self.std_error < 0.0:
            raise ValueError("std_error must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "value": float(self.value),
            "std_error": float(self.std_error),
            "per_quantizer": [float(v) for v in self.per_quantizer],
            "n_paths": int(self.n_paths),
        }


@dataclass(frozen=True, eq=False)
class PathStats:
    """Per-path terminal spot, running maximum, and realized variance."""

    terminal: np.ndarray
    max_spot: np.ndarray
    realized_var: np.ndarray  # annualized, decimal^2


def conditional_coeffs(
    y: np.ndarray, dy: np.ndarray, ou: OUParams, rho: float
) -> ConditionalCoeffs:
    """Drift and vol multipliers along one factor path.

    With zero correlation the conditioning carries no drift and the vol
    multiplier is simply ``exp(y)``.
    """
    y = np.asarray(y, dtype=float)
    dy = np.asarray(dy, dtype=float)
    if y.shape != dy.shape:
        raise ValueError("path and derivative path must have equal length")
    ey = np.exp(y)
    if rho == 0.0:
        mu = np.zeros_like(y)
    else:
        if ou.nu == 0.0:
            raise ValueError("nonzero correlation with zero vol-of-vol: conditioning degenerate")
        mu = (rho / ou.nu) * (dy + ou.kappa_y * y) * ey
    sig = math.sqrt(1.0 - rho * rho) * ey
    return ConditionalCoeffs(mu=mu, sig=sig)


def simulate_conditional(
    model: ModelParams,
    coeffs: ConditionalCoeffs,
    grid: np.ndarray,
    n_paths: int,
    seed: int,
    stream: int = 0,
) -> PathStats:
    """Euler simulation of the conditional spot over ``grid``.

    The running average updates explicitly alongside the spot; each path's
    noise comes from a counter-based substream of ``(seed, stream)``, so the
    result is independent of how work is scheduled.
    """
    grid = np.asarray(grid, dtype=float)
    n_steps = grid.size - 1
    if coeffs.mu.size != grid.size:
        raise ValueError("coefficient paths must match the time grid")
    if n_paths < 1:
        raise ValueError("need at least one path")
    lv = model.localvol
    drift = model.r - model.q
    floor = SPOT_FLOOR_FRACTION * model.s0
    terminal = np.empty(n_paths)
    max_spot = np.empty(n_paths)
    realized = np.empty(n_paths)
    for block, start, size in iter_path_blocks(n_paths):
        gen = block_generator(seed, stream, block)
        s = np.full(size, model.s0)
        a = np.full(size, model.a0)
        peak = np.full(size, model.s0)
        sum_sq = np.zeros(size)
        for i in range(n_steps):
            dt = grid[i + 1] - grid[i]
            sdt = math.sqrt(dt)
            eps = gen.standard_normal(size)
            sigma = lv(s / a)
            growth = 1.0 + (drift + coeffs.mu[i] * sigma) * dt + coeffs.sig[i] * sigma * eps * sdt
            s_new = np.maximum(s * growth, floor)
            a = a + model.kappa_kernel * (s - a) * dt
            log_ret = np.log(s_new / s)
            sum_sq += log_ret * log_ret
            s = s_new
            np.maximum(peak, s, out=peak)
        terminal[start : start + size] = s
        max_spot[start : start + size] = peak
        horizon = grid[-1] - grid[0]
        realized[start : start + size] = sum_sq / horizon
    return PathStats(terminal=terminal, max_spot=max_spot, realized_var=realized)


def _conditional_payoffs(product: Product, stats: PathStats) -> np.ndarray:
    if isinstance(product, VanillaCall):
        return np.maximum(stats.terminal - product.strike, 0.0)
    if isinstance(product, VanillaPut):
        return np.maximum(product.strike - stats.terminal, 0.0)
    if isinstance(product, UpAndOutCall):
        alive = stats.max_spot < product.barrier
        return np.where(alive, np.maximum(stats.terminal - product.strike, 0.0), 0.0)
    if isinstance(product, VarianceSwap):
        return 1e4 * stats.realized_var  # vol-points squared
    if isinstance(product, VolatilitySwap):
        return 1e2 * np.sqrt(stats.realized_var)  # vol points
    raise TypeError(f"unsupported product {type(product).__name__}")


def _is_swap(product: Product) -> bool:
    return isinstance(product, (VarianceSwap, VolatilitySwap))


def price_mc(
    product: Product,
    model: ModelParams,
    quantizer: QuantizerSet,
    n_paths: int,
    seed: int,
) -> PriceResult:
    """Monte Carlo price assembled over the factor quantizer.

    Each quantizer path gets its own conditional simulation and substream;
    conditional means combine with the companion probabilities. Currency
    payoffs discount at ``exp(-r T)``; swap quotes apply their defining
    transform after the linear assembly (square root of the weighted expected
    realized variance for variance swaps).
    """
    horizon = quantizer.horizon
    if product.maturity > horizon + 1e-12:
        raise ValueError(
            f"product maturity {product.maturity} exceeds quantizer horizon {horizon}"
        )
    n_grid = int(round(product.maturity / horizon * (quantizer.grid.size - 1)))
    grid = quantizer.grid[: n_grid + 1]
    means = np.empty(quantizer.q)
    ses = np.empty(quantizer.q)
    for qi in range(quantizer.q):
        coeffs = conditional_coeffs(
            quantizer.paths[qi, : n_grid + 1],
            quantizer.dpaths[qi, : n_grid + 1],
            model.ou,
            model.rho,
        )
        stats = simulate_conditional(model, coeffs, grid, n_paths, seed, stream=qi)
        payoff = _conditional_payoffs(product, stats)
        means[qi] = payoff.mean()
        ses[qi] = payoff.std(ddof=1) / math.sqrt(n_paths)
    if _is_swap(product):
        linear = float(np.dot(quantizer.probs, means))
        linear_se = float(np.sqrt(np.dot(quantizer.probs**2, ses**2)))
        if isinstance(product, VarianceSwap):
            value = math.sqrt(max(linear, 0.0))
            se = 0.5 * linear_se / value if value > 0.0 else linear_se
        else:
            value = linear
            se = linear_se
        return PriceResult(value=value, std_error=se, per_quantizer=means, n_paths=n_paths)
    disc = math.exp(-model.r * product.maturity)
    per_q = disc * means
    value = float(np.dot(quantizer.probs, per_q))
    se = disc * float(np.sqrt(np.dot(quantizer.probs**2, ses**2)))
    return PriceResult(value=value, std_error=se, per_quantizer=per_q, n_paths=n_paths)


def black_formula(
    s0: float, strike: float, maturity: float, vol: float, r: float, q: float,
    kind: str = "call",
) -> float:
    """Lognormal forward price of a European option."""
    if s0 <= 0.0 or strike <= 0.0 or maturity <= 0.0:
        raise ValueError("spot, strike, and maturity must be positive")
    if vol < 0.0:
        raise ValueError("volatility must be nonnegative")
    if kind not in ("call", "put"):
        raise ValueError(f"kind must be 'call' or 'put', got {kind!r}")
    fwd = s0 * math.exp((r - q) * maturity)
    disc = math.exp(-r * maturity)
    total = vol * math.sqrt(maturity)
    if total < 1e-14:
        intrinsic = fwd - strike if kind == "call" else strike - fwd
        return disc * max(intrinsic, 0.0)
    d1 = (math.log(fwd / strike) + 0.5 * total * total) / total
    d2 = d1 - total
    if kind == "call":
        return disc * (fwd * norm.cdf(d1) - strike * norm.cdf(d2))
    return disc * (strike * norm.cdf(-d2) - fwd * norm.cdf(-d1))


def implied_vol(
    price: float, s0: float, strike: float, maturity: float, r: float, q: float,
    kind: str = "call",
) -> float:
    """Invert the lognormal formula by safeguarded Newton bisection.

    Converges to 1e-10 in volatility; raises if the price violates
    no-arbitrage bounds.
    """
    disc = math.exp(-r * maturity)
    fwd = s0 * math.exp((r - q) * maturity)
    if kind == "call":
        lower, upper = disc * max(fwd - strike, 0.0), disc * fwd
    else:
        lower, upper = disc * max(strike - fwd, 0.0), disc * strike
    if not lower <= price <= upper:
        raise ValueError(f"price {price} outside no-arbitrage bounds [{lower}, {upper}]")
    lo, hi = 1e-9, 5.0
    vol = 0.2
    for _ in range(100):
        val = black_formula(s0, strike, maturity, vol, r, q, kind)
        diff = val - price
        if abs(diff) < 1e-14 * max(1.0, s0):
            break
        if diff > 0.0:
            hi = vol
        else:
            lo = vol
        total = vol * math.sqrt(maturity)
        d1 = (math.log(fwd / strike) + 0.5 * total * total) / total
        vega = disc * fwd * norm.pdf(d1) * math.sqrt(maturity)
        step = diff / vega if vega > 1e-300 else 0.0
        candidate = vol - step
        vol = candidate if lo < candidate < hi else 0.5 * (lo + hi)
        if hi - lo < 1e-10:
            break
    return vol


def payoff_varswap(path: np.ndarray) -> float:
    """Variance-swap quote of one daily path: root of annualized realized variance."""
    rv = _realized_variance(path)
    return 100.0 * math.sqrt(rv)


def payoff_volswap(path: np.ndarray) -> float:
    """Volatility-swap quote of one daily path: annualized realized volatility."""
    rv = _realized_variance(path)
    return 100.0 * math.sqrt(rv)


def _realized_variance(path: np.ndarray) -> float:
    path = np.asarray(path, dtype=float)
    if path.size < 2:
        raise ValueError("path needs at least two observations")
    if np.any(path <= 0.0):
        raise ValueError("non-positive spot in path")
    log_ret = np.diff(np.log(path))
    return float(TRADING_DAYS / log_ret.size * np.sum(log_ret**2))


def price_mlp(
    product: VanillaCall,
    model: ModelParams,
    y: np.ndarray,
    grid: np.ndarray | None = None,
) -> float:
    """Most-likely-path approximation for a vanilla call.

    First pass: a deterministic proxy spot runs from the spot to the strike,
    linear in log space, accumulating the local variance along the way. Second
    pass: the proxy is re-drawn linear in the first pass's variance clock, and
    the accumulated variance prices the option through the lognormal formula.
    """
    if not isinstance(product, (VanillaCall, VanillaPut)):
        raise TypeError("most-likely-path pricing supports vanilla options only")
    y = np.asarray(y, dtype=float)
    if grid is None:
        grid = np.linspace(0.0, product.maturity, y.size)
    grid = np.asarray(grid, dtype=float)
    if grid.size != y.size:
        raise ValueError("grid and path must have equal length")
    t = np.linspace(0.0, product.maturity, max(int(round(product.maturity * TRADING_DAYS)), 16) + 1)
    y_t = np.interp(t, grid, y)
    log_ratio = math.log(product.strike / model.s0)

    def variance_profile(clock: np.ndarray) -> np.ndarray:
        log_s = math.log(model.s0) + log_ratio * clock
        s = np.exp(log_s)
        a = np.empty_like(s)
        a[0] = model.a0
        for i in range(1, s.size):
            dt = t[i] - t[i - 1]
            a[i] = a[i - 1] + model.kappa_kernel * (s[i - 1] - a[i - 1]) * dt
        sigma = np.asarray(model.localvol(s / a), dtype=float)
        return (np.exp(y_t) * sigma) ** 2

    uniform_clock = t / t[-1] if t[-1] > 0 else np.zeros_like(t)
    v1 = variance_profile(uniform_clock)
    cum = np.concatenate(([0.0], np.cumsum(0.5 * (v1[1:] + v1[:-1]) * np.diff(t))))
    total1 = cum[-1]
    clock = cum / total1 if total1 > 0.0 else uniform_clock
    v2 = variance_profile(clock)
    total_var = float(np.trapezoid(v2, t))
    vol_eff = math.sqrt(max(total_var, 0.0) / product.maturity)
    kind = "call" if isinstance(product, VanillaCall) else "put"
    return black_formula(model.s0, product.strike, product.maturity, vol_eff, model.r, model.q, kind)
