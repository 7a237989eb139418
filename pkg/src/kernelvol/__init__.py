"""Scale-invariant path-dependent local stochastic volatility toolkit.

Calibrates a lag-weight kernel and a quadratic vol-index map from joint
spot/vol-index history, extracts autoregressive innovation dynamics, prices
derivatives by conditioning on a functional quantizer of the volatility
factor, and generates consistent joint scenarios.
"""

__version__ = "0.1.0"

from .calibration import (
    ARFit,
    CalibrationResult,
    LinearFit,
    QuadraticFit,
    evaluate_fit,
    fit_ar1,
    fit_linear,
    fit_power_law,
    fit_quadratic,
    innovations,
    map_ar1_to_ou,
    optimize_kernel,
)
from .engines import price_quantized
from .kernels import (
    IndexSeries,
    Kernel,
    ewma_state_update,
    exp_kernel,
    flat_kernel,
    index_values,
    powerlaw_kernel,
    scale_index,
    softmax_weights,
)
from .market_data import JointSeries, MarketSeries, align, load_joint, load_series, write_joint
from .pde import PdeSettings, price_pde
from .pricer import (
    ConditionalCoeffs,
    LocalVolFn,
    ModelParams,
    PriceResult,
    UpAndOutCall,
    VanillaCall,
    VanillaPut,
    VarianceSwap,
    VolatilitySwap,
    black_formula,
    conditional_coeffs,
    default_model_params,
    implied_vol,
    payoff_varswap,
    payoff_volswap,
    price_mc,
    price_mlp,
    simulate_conditional,
)
from .quantizer import (
    NumericalError,
    OUParams,
    QuantizerSet,
    build_quantizer,
    gaussian_quantizer,
    kl_coordinates,
    quadrature,
)
from .scenarios import ScenarioSet, ValidationReport, generate, validate

__all__ = [name for name in dir() if not name.startswith("_")]
