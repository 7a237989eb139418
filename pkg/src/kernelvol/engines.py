"""Quantizer-assembled pricing across the Monte Carlo, PDE, and proxy engines."""

from __future__ import annotations

import numpy as np

from .pde import PdeSettings, price_pde
from .pricer import (
    ModelParams,
    PriceResult,
    Product,
    VanillaCall,
    VanillaPut,
    implied_vol,
    price_mc,
    price_mlp,
)
from .quantizer import QuantizerSet

ENGINES = ("mc", "pde", "mlp")


def price_quantized(
    product: Product,
    model: ModelParams,
    quantizer: QuantizerSet,
    engine: str = "mc",
    n_paths: int = 100_000,
    seed: int = 0,
    pde_settings: PdeSettings | None = None,
) -> PriceResult:
    """Price a product by companion-weighted assembly of conditional values."""
    if engine not in ENGINES:
        raise ValueError(f"unknown engine {engine!r}; expected one of {ENGINES}")
    if engine == "mc":
        return price_mc(product, model, quantizer, n_paths=n_paths, seed=seed)
    if not isinstance(product, (VanillaCall, VanillaPut)):
        raise ValueError(f"{engine} engine prices vanilla options only")
    if product.maturity > quantizer.horizon + 1e-12:
        raise ValueError("product maturity exceeds quantizer horizon")
    if engine == "mlp" and model.rho != 0.0:
        raise ValueError("proxy-path engine assumes zero spot-vol correlation")
    n_grid = int(round(product.maturity / quantizer.horizon * (quantizer.grid.size - 1)))
    grid = quantizer.grid[: n_grid + 1]
    values = np.empty(quantizer.q)
    for qi in range(quantizer.q):
        yq = quantizer.paths[qi, : n_grid + 1]
        dyq = quantizer.dpaths[qi, : n_grid + 1]
        if engine == "pde":
            values[qi] = price_pde(product, model, yq, dyq, grid=grid, settings=pde_settings)
        else:
            values[qi] = price_mlp(product, model, yq, grid=grid)
    value = float(np.dot(quantizer.probs, values))
    return PriceResult(value=value, std_error=0.0, per_quantizer=values, n_paths=0)


def implied_vol_of(result_value: float, product: Product, model: ModelParams) -> float:
    """Lognormal implied volatility of a vanilla price, in decimal."""
    if isinstance(product, VanillaCall):
        kind = "call"
    elif isinstance(product, VanillaPut):
        kind = "put"
    else:
        raise ValueError("implied vol applies to vanilla options only")
    return implied_vol(
        result_value, model.s0, product.strike, product.maturity, model.r, model.q, kind
    )
