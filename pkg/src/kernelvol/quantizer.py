"""Functional quantization of the mean-reverting volatility factor.

The factor follows ``dY = -kappa_y Y dt + nu dW``. Its driving Brownian
motion is expanded in the Karhunen-Loeve basis on [0, T],

    W(t) = sum_k sqrt(lambda_k) z_k e_k(t),
    e_k(t) = sqrt(2/T) sin((k - 1/2) pi t / T),
    lambda_k = (T / ((k - 1/2) pi))^2,

with independent standard normal coordinates z_k. Each retained coordinate is
replaced by an optimal finite quantizer of the normal law; every combination
of quantizer points yields a deterministic Brownian path, which maps to a
factor path through the exact stochastic-convolution integral (closed form
for the sine basis). Cell probabilities multiply across coordinates, giving a
discrete quadrature rule over factor paths.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.stats import norm

PROB_TOL = 1e-12
LLOYD_TOL = 1e-10
LLOYD_MAX_ITER = 10_000


class NumericalError(RuntimeError):
    """A numerical routine failed to converge."""


@dataclass(frozen=True)
class OUParams:
    """Mean-reverting Gaussian factor: rate per year, vol per sqrt-year, start."""

    kappa_y: float
    nu: float
    y0: float = 0.0

    def __post_init__(self) -> None:
        if self.kappa_y <= 0.0:
            raise ValueError("kappa_y must be positive")
        if self.nu < 0.0:
            raise ValueError("nu must be nonnegative")

    def terminal_variance(self, t: float) -> float:
        return self.nu**2 * (1.0 - math.exp(-2.0 * self.kappa_y * t)) / (2.0 * self.kappa_y)


@dataclass(frozen=True, eq=False)
class QuantizerSet:
    """Deterministic factor paths with derivatives and companion probabilities."""

    grid: np.ndarray        # time points, years, 0 = first entry
    paths: np.ndarray       # (Q, len(grid)) factor values
    dpaths: np.ndarray      # (Q, len(grid)) time derivatives
    probs: np.ndarray       # (Q,) companion probabilities

    def __post_init__(self) -> None:
        for name in ("grid", "paths", "dpaths", "probs"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        q = self.probs.size
        if q < 1 or self.paths.shape != (q, self.grid.size) or self.dpaths.shape != self.paths.shape:
            raise ValueError("inconsistent quantizer array shapes")
        if np.any(self.probs < 0.0) or abs(self.probs.sum() - 1.0) > PROB_TOL:
            raise ValueError("companion probabilities must be nonnegative and sum to 1")

    @property
    def q(self) -> int:
        return self.probs.size

    @property
    def horizon(self) -> float:
        return float(self.grid[-1])


def kl_coordinates(
    ou: OUParams, horizon: float, d: int
) -> tuple[list[Callable[[np.ndarray], np.ndarray]], np.ndarray]:
    """First ``d`` Karhunen-Loeve eigenpairs of the driving Brownian motion.

    The factor's own parameters do not enter the eigenpairs; they are carried
    so that callers assemble coordinates and the exact factor map from one
    parameter set.
    """
    del ou  # eigenpairs belong to the driving Brownian motion
    if d < 1:
        raise ValueError("need at least one coordinate")
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")
    eigenfunctions = []
    eigenvalues = np.empty(d)
    for k in range(1, d + 1):
        omega = (k - 0.5) * math.pi / horizon
        eigenvalues[k - 1] = (horizon / ((k - 0.5) * math.pi)) ** 2

        def ef(t: np.ndarray, _omega: float = omega, _h: float = horizon) -> np.ndarray:
            return np.sqrt(2.0 / _h) * np.sin(_omega * np.asarray(t, dtype=float))

        eigenfunctions.append(ef)
    return eigenfunctions, eigenvalues


def gaussian_quantizer(n_levels: int) -> tuple[np.ndarray, np.ndarray]:
    """Optimal ``n_levels``-point quantizer of the standard normal law.

    Lloyd fixed-point iteration: points are the conditional means of their
    Voronoi cells, cell probabilities the normal measure of the cells. The
    iteration starts from normal quantiles, is re-symmetrized each sweep, and
    stops when the largest centroid move falls below 1e-10.
    """
    if n_levels < 1:
        raise ValueError("need at least one level")
    if n_levels == 1:
        return np.zeros(1), np.ones(1)
    points = norm.ppf((2.0 * np.arange(n_levels) + 1.0) / (2.0 * n_levels))
    for _ in range(LLOYD_MAX_ITER):
        bounds = np.concatenate(([-np.inf], 0.5 * (points[1:] + points[:-1]), [np.inf]))
        probs = norm.cdf(bounds[1:]) - norm.cdf(bounds[:-1])
        centroids = (norm.pdf(bounds[:-1]) - norm.pdf(bounds[1:])) / probs
        centroids = 0.5 * (centroids - centroids[::-1])
        move = float(np.max(np.abs(centroids - points)))
        points = centroids
        if move < LLOYD_TOL:
            break
    else:
        raise NumericalError(f"Lloyd iteration did not converge for N={n_levels}")
    bounds = np.concatenate(([-np.inf], 0.5 * (points[1:] + points[:-1]), [np.inf]))
    probs = norm.cdf(bounds[1:]) - norm.cdf(bounds[:-1])
    return points, probs


def _ou_response(omega: float, kappa: float, t: np.ndarray, horizon: float) -> np.ndarray:
    """Exact ``int_0^t exp(-kappa (t-s)) d e_k(s)`` for the sine eigenfunction."""
    scale = math.sqrt(2.0 / horizon) * omega / (kappa**2 + omega**2)
    return scale * (omega * np.sin(omega * t) + kappa * np.cos(omega * t) - kappa * np.exp(-kappa * t))


def build_quantizer(
    ou: OUParams,
    horizon: float,
    grid_steps: int,
    level_allocation: Sequence[int],
) -> QuantizerSet:
    """Product quantizer over the first ``len(level_allocation)`` coordinates.

    Path count is the product of the per-coordinate level counts. Paths and
    their time derivatives are evaluated in closed form on a uniform grid of
    ``grid_steps`` intervals over ``[0, horizon]``.
    """
    if grid_steps < 1:
        raise ValueError("grid needs at least one step")
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")
    allocation = [int(n) for n in level_allocation]
    if not allocation or any(n < 1 for n in allocation):
        raise ValueError("level allocation must be positive integers")
    d = len(allocation)
    t = np.linspace(0.0, horizon, grid_steps + 1)
    _, eigenvalues = kl_coordinates(ou, horizon, d)
    omegas = np.array([(k - 0.5) * math.pi / horizon for k in range(1, d + 1)])

    responses = np.stack([_ou_response(om, ou.kappa_y, t, horizon) for om in omegas])
    dbasis = np.stack(
        [math.sqrt(2.0 / horizon) * om * np.cos(om * t) for om in omegas]
    )

    quantizers = [gaussian_quantizer(n) for n in allocation]
    mean_path = ou.y0 * np.exp(-ou.kappa_y * t)

    paths, dpaths, probs = [], [], []
    for combo in itertools.product(*(range(n) for n in allocation)):
        z = np.array([quantizers[k][0][combo[k]] for k in range(d)])
        p = float(np.prod([quantizers[k][1][combo[k]] for k in range(d)]))
        coeffs = np.sqrt(eigenvalues) * z
        y = mean_path + ou.nu * coeffs @ responses
        wprime = coeffs @ dbasis
        dy = -ou.kappa_y * y + ou.nu * wprime
        paths.append(y)
        dpaths.append(dy)
        probs.append(p)
    return QuantizerSet(
        grid=t,
        paths=np.asarray(paths),
        dpaths=np.asarray(dpaths),
        probs=np.asarray(probs),
    )


def quadrature(functional: Callable[[np.ndarray], float], quantizer: QuantizerSet) -> float:
    """Companion-weighted sum of the functional over the quantizer paths."""
    values = np.array([float(functional(path)) for path in quantizer.paths])
    if not np.all(np.isfinite(values)):
        raise ValueError("functional is non-finite on a quantizer path")
    return float(np.dot(quantizer.probs, values))


def write_quantizer(
    q: QuantizerSet,
    csv_path: str | Path,
    json_path: str | Path,
    comment: str = "",
    extra: dict | None = None,
) -> None:
    """Dump paths as ``t, y_1..y_Q, dy_1..dy_Q`` CSV plus a JSON prob header."""
    header = ["t"]
    header += [f"y_{i + 1}" for i in range(q.q)]
    header += [f"dy_{i + 1}" for i in range(q.q)]
    lines = ([f"# {comment}"] if comment else []) + [",".join(header)]
    for j, tj in enumerate(q.grid):
        row = [repr(float(tj))]
        row += [repr(float(q.paths[i, j])) for i in range(q.q)]
        row += [repr(float(q.dpaths[i, j])) for i in range(q.q)]
        lines.append(",".join(row))
    Path(csv_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    payload = {"probs": [float(p) for p in q.probs], "q": q.q, "horizon": q.horizon}
    if extra:
        payload.update(extra)
    Path(json_path).write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")
