"""Backward PDE pricer for vanillas conditioned on a factor path.

State space is (x = ln s, A) where A is the running spot average. A carries
no diffusion — it follows ``dA = kappa (s - A) dt`` deterministically — so
each time step splits into a semi-Lagrangian shift along the exact A
characteristic (``A -> s + (A - s) exp(-kappa dt)`` at frozen s, evaluated by
clipped cubic interpolation, unconditionally stable and nearly diffusion-free)
and a theta-scheme solve in x. The x solve handles convection, the squared
conditional volatility, and discounting; the first steps from expiry run
fully implicit to damp the payoff kink, the rest are Crank-Nicolson.
Far-field boundaries assume value linear in spot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .pricer import ModelParams, VanillaCall, VanillaPut


def _interp_columns_cubic(u: np.ndarray, dest: np.ndarray, a0: float, da: float) -> np.ndarray:
    """Interpolate each column of ``u`` along axis 0 at the positions ``dest``.

    Four-point Lagrange interpolation on the uniform grid ``a0 + k da``,
    clipped to the stencil's range so repeated application stays
    non-oscillatory. Destinations are assumed inside the grid hull.
    """
    n_a, n_s = u.shape
    pos = np.clip((dest - a0) / da, 0.0, n_a - 1.0)
    base = np.clip(np.floor(pos).astype(np.intp), 1, n_a - 3)
    xi = pos - base
    cols = np.broadcast_to(np.arange(n_s), u.shape)
    um1 = u[base - 1, cols]
    u0 = u[base, cols]
    u1 = u[base + 1, cols]
    u2 = u[base + 2, cols]
    wm1 = -xi * (xi - 1.0) * (xi - 2.0) / 6.0
    w0 = (xi + 1.0) * (xi - 1.0) * (xi - 2.0) / 2.0
    w1 = -(xi + 1.0) * xi * (xi - 2.0) / 2.0
    w2 = (xi + 1.0) * xi * (xi - 1.0) / 6.0
    out = wm1 * um1 + w0 * u0 + w1 * u1 + w2 * u2
    stencil_min = np.minimum(np.minimum(um1, u0), np.minimum(u1, u2))
    stencil_max = np.maximum(np.maximum(um1, u0), np.maximum(u1, u2))
    return np.clip(out, stencil_min, stencil_max)


@dataclass(frozen=True)
class PdeSettings:
    n_s: int = 400          # log-spot nodes (forced odd so the spot is a node)
    n_a: int = 80           # running-average nodes
    n_t: int = 500          # time steps
    s_span_sds: float = 8.0  # half-width of the log grid, flat-vol standard deviations
    rannacher: int = 2       # implicit start-up steps


def price_pde(
    product: VanillaCall | VanillaPut,
    model: ModelParams,
    y: np.ndarray,
    dy: np.ndarray,
    grid: np.ndarray | None = None,
    settings: PdeSettings | None = None,
) -> float:
    """Value of a vanilla option along one factor path.

    ``y`` and ``dy`` are sampled on ``grid`` (uniform over the product maturity
    when omitted) and interpolated onto the solver's own time steps.
    """
    if not isinstance(product, (VanillaCall, VanillaPut)):
        raise TypeError("PDE pricing supports vanilla options only")
    cfg = settings or PdeSettings()
    y = np.asarray(y, dtype=float)
    dy = np.asarray(dy, dtype=float)
    if y.shape != dy.shape:
        raise ValueError("path and derivative path must have equal length")
    maturity = product.maturity
    if grid is None:
        grid = np.linspace(0.0, maturity, y.size)
    grid = np.asarray(grid, dtype=float)
    if grid.size != y.size:
        raise ValueError("grid and path must have equal length")
    if grid[-1] < maturity - 1e-12:
        raise ValueError("factor path does not cover the product maturity")

    n_s = cfg.n_s if cfg.n_s % 2 == 1 else cfg.n_s + 1
    half = (n_s - 1) // 2
    sig_scale = float(np.exp(y).max())
    sigma_ref = float(np.asarray(model.localvol(1.0))) * sig_scale
    span = cfg.s_span_sds * sigma_ref * math.sqrt(maturity) + abs(model.r - model.q) * maturity
    span = max(span, 0.5)
    x0 = math.log(model.s0)
    dx = span / half
    x = x0 + dx * (np.arange(n_s) - half)
    s = np.exp(x)

    # the running average disperses less than the spot; concentrating its grid
    # there sharpens the vol resolution where the value actually lives, while
    # characteristics that leave the box clamp to the (vol-saturated) edge
    a_span = 0.65 * span
    a_lo = max(s[0], model.a0 * math.exp(-a_span))
    a_hi = min(s[-1], model.a0 * math.exp(a_span))
    a_grid = np.linspace(a_lo, a_hi, cfg.n_a)
    da = a_grid[1] - a_grid[0]

    strike = product.strike
    if isinstance(product, VanillaCall):
        u = np.maximum(s - strike, 0.0)[None, :].repeat(cfg.n_a, axis=0)
    else:
        u = np.maximum(strike - s, 0.0)[None, :].repeat(cfg.n_a, axis=0)

    times = np.linspace(0.0, maturity, cfg.n_t + 1)
    y_all = np.interp(times, grid, y)
    dy_all = np.interp(times, grid, dy)

    sigma_loc = np.asarray(model.localvol(s[None, :] / a_grid[:, None]))

    # banded layout of the block tridiagonal x-operator, blocks stacked over A
    n_tot = cfg.n_a * n_s
    ab = np.zeros((3, n_tot))
    joint = np.arange(1, cfg.n_a) * n_s  # first column of each block after the first

    rho = model.rho
    nu = model.ou.nu
    kap = model.ou.kappa_y

    for k in range(cfg.n_t - 1, -1, -1):
        dt = times[k + 1] - times[k]
        ymid = 0.5 * (y_all[k] + y_all[k + 1])
        dymid = 0.5 * (dy_all[k] + dy_all[k + 1])
        ey = math.exp(ymid)
        if rho == 0.0:
            mu_t = 0.0
        else:
            mu_t = (rho / nu) * (dymid + kap * ymid) * ey
        sig_t = math.sqrt(1.0 - rho * rho) * ey

        # semi-Lagrangian shift along the exact A characteristic at frozen s
        if model.kappa_kernel != 0.0:
            decay = math.exp(-model.kappa_kernel * dt)
            a_dest = s[None, :] + (a_grid[:, None] - s[None, :]) * decay
            u = _interp_columns_cubic(u, a_dest, a_grid[0], da)

        sigma = sig_t * sigma_loc
        sig2 = sigma * sigma
        conv = (model.r - model.q) + mu_t * sigma_loc - 0.5 * sig2
        # hybrid convection: upwind nodes whose cell Peclet number is large
        upwind_pos = (conv * dx > 1.8 * sig2) & (conv > 0)
        upwind_neg = (-conv * dx > 1.8 * sig2) & (conv < 0)
        centered = ~(upwind_pos | upwind_neg)

        diff = 0.5 * sig2 / dx**2
        adv = conv / (2.0 * dx)
        adv1 = conv / dx
        lower = np.where(centered, diff - adv, np.where(upwind_neg, diff - adv1, diff))
        upper = np.where(centered, diff + adv, np.where(upwind_pos, diff + adv1, diff))
        diag = np.where(
            centered, -2.0 * diff - model.r,
            np.where(upwind_pos, -2.0 * diff - adv1 - model.r, -2.0 * diff + adv1 - model.r),
        )
        # linear-in-spot far field: zero gamma, one-sided convection
        lower[:, 0] = 0.0
        upper[:, 0] = conv[:, 0] / dx
        diag[:, 0] = -conv[:, 0] / dx - model.r
        upper[:, -1] = 0.0
        lower[:, -1] = -conv[:, -1] / dx
        diag[:, -1] = conv[:, -1] / dx - model.r

        theta = 1.0 if (cfg.n_t - 1 - k) < cfg.rannacher else 0.5
        # explicit part of the theta scheme
        w = (1.0 - theta) * dt
        rhs = u * (1.0 + w * diag)
        rhs[:, 1:] += w * lower[:, 1:] * u[:, :-1]
        rhs[:, :-1] += w * upper[:, :-1] * u[:, 1:]

        wi = theta * dt
        ab[0, 1:] = (-wi * upper).ravel()[:-1]
        ab[1, :] = (1.0 - wi * diag).ravel()
        ab[2, :-1] = (-wi * lower).ravel()[1:]
        ab[0, joint] = 0.0
        ab[2, joint - 1] = 0.0
        u = solve_banded((1, 1), ab, rhs.ravel(), overwrite_b=True).reshape(cfg.n_a, n_s)

    # spot sits exactly on the center node; interpolate across A only
    col = u[:, half]
    a0 = min(max(model.a0, a_grid[0]), a_grid[-1])
    return float(np.interp(a0, a_grid, col))
