"""Command-line interface: calibrate, price, scenario, report, quantize.

Every artifact embeds the config hash and library version; reruns with the
same config and seed are byte-identical. Exit codes: 0 success, 1 numerical
failure, 2 input error. Failures print a machine-readable JSON object to
stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .calibration import (
    CalibrationResult,
    fit_ar1,
    fit_power_law,
    innovations,
    map_ar1_to_ou,
    optimize_kernel,
    ARFit,
    evaluate_fit,
)
from .config import RunConfig
from .engines import implied_vol_of, price_quantized
from .market_data import DT_DAILY, JointSeries, align, load_series
from .pricer import (
    LocalVolFn,
    ModelParams,
    Product,
    UpAndOutCall,
    VanillaCall,
    VanillaPut,
    VarianceSwap,
    VolatilitySwap,
)
from .quantizer import NumericalError, OUParams, build_quantizer, write_quantizer
from .reporting import emit_report
from .scenarios import generate, validate, write_scenario_csvs


def _stamp(cfg: RunConfig) -> str:
    return f"config_sha256={cfg.config_hash} version={__version__}"


def _load_joint(cfg: RunConfig) -> JointSeries:
    spx_path, vix_path = cfg.require_data()
    spx = load_series(spx_path, "spx")
    vix = load_series(vix_path, "vix")
    return align(spx, vix)


def _in_sample(cfg: RunConfig, data: JointSeries) -> JointSeries:
    if cfg.in_sample_start and cfg.in_sample_end:
        return data.slice(cfg.in_sample_start, cfg.in_sample_end)
    return data


def _artifact_path(cfg: RunConfig) -> Path:
    return cfg.calibration_json or (cfg.out_dir / "calibration.json")


def cmd_calibrate(cfg: RunConfig) -> int:
    data = _load_joint(cfg)
    sample = _in_sample(cfg, data)
    result = optimize_kernel(sample, cfg.kernel_lags, budget=cfg.optimizer_budget, seed=cfg.seed)
    innov = innovations(sample, result.kernel, result.fit)
    ar = fit_ar1(innov)
    if not 0.0 < ar.phi < 1.0:
        # near-perfect fits leave only numerical dust in the innovations; pin a
        # stationary persistence so the factor degenerates gracefully
        ar = ARFit(phi=0.5, sigma=ar.sigma, r2=ar.r2)
    ou = map_ar1_to_ou(ar, DT_DAILY)
    power_params, power_score = fit_power_law(result.kernel)

    out_r2 = None
    if cfg.out_sample_start and cfg.out_sample_end:
        out_slice = data.slice(cfg.out_sample_start, cfg.out_sample_end)
        out_r2 = evaluate_fit(result, out_slice)

    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    artifact = {
        "config_sha256": cfg.config_hash,
        "version": __version__,
        "calibration": json.loads(result.to_json()),
        "ar": {"phi": ar.phi, "sigma": ar.sigma, "r2": ar.r2},
        "ou": {"kappa_y": ou.kappa_y, "nu": ou.nu},
        "power_law": {"params": list(power_params), "score": power_score},
        "out_of_sample_r2": out_r2,
    }
    path = _artifact_path(cfg)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(artifact, sort_keys=True, indent=1) + "\n", encoding="utf-8")

    weight_lines = [f"# {_stamp(cfg)}", "lag,weight"]
    weight_lines += [f"{j},{float(w)!r}" for j, w in enumerate(result.kernel.weights, start=1)]
    (cfg.out_dir / "kernel_weights.csv").write_text("\n".join(weight_lines) + "\n", encoding="utf-8")

    diag = [
        ("kernel_lags", cfg.kernel_lags),
        ("in_sample_r2", result.in_sample_r2),
        ("a", result.fit.a),
        ("b", result.fit.b),
        ("c", result.fit.c),
        ("out_of_sample_r2", "" if out_r2 is None else out_r2),
        ("ar_phi", ar.phi),
        ("ar_sigma", ar.sigma),
        ("ar_r2", ar.r2),
        ("ou_kappa_y", ou.kappa_y),
        ("ou_nu", ou.nu),
        ("power_p1", power_params[1]),
        ("power_p2", power_params[2]),
        ("power_score", power_score),
        ("objective_final", float(result.objective_trace[-1])),
        ("improved", result.improved),
    ]
    diag_lines = [f"# {_stamp(cfg)}", "metric,value"]
    diag_lines += [f"{k},{v!r}" if isinstance(v, float) else f"{k},{v}" for k, v in diag]
    (cfg.out_dir / "fit_diagnostics.csv").write_text("\n".join(diag_lines) + "\n", encoding="utf-8")
    print(f"calibrated {cfg.kernel_lags}-lag kernel: in-sample r2 = {result.in_sample_r2:.2f}")
    return 0


def _model_from_artifact(cfg: RunConfig, spot: float) -> ModelParams:
    path = _artifact_path(cfg)
    if not path.exists():
        raise FileNotFoundError(f"calibration artifact not found: {path}")
    artifact = json.loads(path.read_text(encoding="utf-8"))
    result = CalibrationResult.from_json(json.dumps(artifact["calibration"]))
    ou = OUParams(kappa_y=artifact["ou"]["kappa_y"], nu=artifact["ou"]["nu"])
    kappa_kernel = cfg.kappa_kernel
    if kappa_kernel is None:
        kappa_kernel = 252.0 / result.kernel.mean_lag()
    localvol = LocalVolFn(
        a=result.fit.a,
        b=result.fit.b,
        c=result.fit.c,
        i_lo=0.8 * result.index_min,
        i_hi=1.2 * result.index_max,
    )
    return ModelParams(
        r=cfg.rate,
        q=cfg.dividend_yield,
        rho=cfg.correlation,
        ou=ou,
        kappa_kernel=kappa_kernel,
        localvol=localvol,
        s0=spot,
        a0=spot,
    )


def _parse_product(spec: dict) -> Product:
    if not isinstance(spec, dict):
        raise ValueError("product spec must be a JSON object")
    kind = spec.get("type")
    if kind is None:
        raise ValueError("product field 'type' is missing")
    def need(field: str) -> float:
        if field not in spec:
            raise ValueError(f"product field '{field}' is missing for type '{kind}'")
        value = spec[field]
        if not isinstance(value, (int, float)):
            raise ValueError(f"product field '{field}' must be a number, got {value!r}")
        return float(value)
    if kind == "vanilla_call":
        return VanillaCall(strike=need("strike"), maturity=need("maturity"))
    if kind == "vanilla_put":
        return VanillaPut(strike=need("strike"), maturity=need("maturity"))
    if kind == "up_and_out_call":
        return UpAndOutCall(strike=need("strike"), barrier=need("barrier"), maturity=need("maturity"))
    if kind == "variance_swap":
        return VarianceSwap(maturity=need("maturity"))
    if kind == "volatility_swap":
        return VolatilitySwap(maturity=need("maturity"))
    raise ValueError(f"unknown product type {kind!r}")


def cmd_price(cfg: RunConfig, product_path: Path) -> int:
    if not product_path.exists():
        raise FileNotFoundError(f"product spec not found: {product_path}")
    try:
        spec = json.loads(product_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{product_path}: malformed JSON: {exc}") from None
    product = _parse_product(spec)
    spot = float(spec.get("spot", 100.0))
    # the request JSON may override the run configuration
    if "engine" in spec:
        cfg.engines = (str(spec["engine"]),)
    if "engines" in spec:
        cfg.engines = tuple(str(e) for e in spec["engines"])
    if "n_paths" in spec:
        cfg.n_paths = int(spec["n_paths"])
    if "seed" in spec:
        cfg.seed = int(spec["seed"])
    quant_spec = spec.get("quantizer", {})
    if not isinstance(quant_spec, dict):
        raise ValueError("product field 'quantizer' must be an object")
    if "allocation" in quant_spec:
        cfg.quantizer_allocation = tuple(int(n) for n in quant_spec["allocation"])
    if "grid_steps" in quant_spec:
        cfg.quantizer_grid_steps = int(quant_spec["grid_steps"])
    model = _model_from_artifact(cfg, spot)
    horizon = max(cfg.quantizer_horizon, product.maturity)
    quantizer = build_quantizer(
        model.ou, horizon, cfg.quantizer_grid_steps, cfg.quantizer_allocation
    )
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    vanilla = isinstance(product, (VanillaCall, VanillaPut))
    results = {}
    for engine in cfg.engines:
        if engine != "mc" and not vanilla:
            print(f"{engine}: skipped (prices vanilla options only)")
            continue
        res = price_quantized(
            product, model, quantizer, engine=engine, n_paths=cfg.n_paths, seed=cfg.seed
        )
        results[engine] = res
        payload = {
            "config_sha256": cfg.config_hash,
            "version": __version__,
            "engine": engine,
            "product": spec,
            "seed": cfg.seed,
            **res.to_dict(),
        }
        out_path = cfg.out_dir / f"price_{engine}.json"
        out_path.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n", encoding="utf-8")
        print(f"{engine}: value = {res.value:.6f}  (se {res.std_error:.6f})")

    if len(cfg.engines) > 1 and isinstance(product, (VanillaCall, VanillaPut)):
        lines = [f"# {_stamp(cfg)}", "strike," + ",".join(f"iv_{e}" for e in cfg.engines)]
        for m in cfg.strikes:
            strike = m * spot
            swept = replace(product, strike=strike)
            ivs = []
            for engine in cfg.engines:
                res = price_quantized(
                    swept, model, quantizer, engine=engine, n_paths=cfg.n_paths, seed=cfg.seed
                )
                ivs.append(100.0 * implied_vol_of(res.value, swept, model))
            lines.append(",".join([repr(strike)] + [repr(v) for v in ivs]))
        (cfg.out_dir / "ivol_comparison.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


def cmd_scenario(cfg: RunConfig) -> int:
    artifact = json.loads(_artifact_path(cfg).read_text(encoding="utf-8"))
    result = CalibrationResult.from_json(json.dumps(artifact["calibration"]))
    ar = ARFit(**artifact["ar"])
    model = _model_from_artifact(cfg, 100.0)
    scen = generate(model, result.fit, ar, cfg.scenario_horizon, cfg.scenario_paths, cfg.seed)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    write_scenario_csvs(scen, cfg.out_dir, header_comment=_stamp(cfg))
    manifest = {
        "config_sha256": cfg.config_hash,
        "version": __version__,
        "seed": cfg.seed,
        "n_paths": scen.n_paths,
        "horizon_years": cfg.scenario_horizon,
        "model": {
            "r": model.r, "q": model.q, "rho": model.rho,
            "kappa_kernel": model.kappa_kernel,
            "kappa_y": model.ou.kappa_y, "nu": model.ou.nu,
            "ar_phi": ar.phi, "ar_sigma": ar.sigma,
        },
    }
    (cfg.out_dir / "scenario_manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=1) + "\n", encoding="utf-8"
    )
    if cfg.spx_csv is not None and cfg.vix_csv is not None:
        reference = _load_joint(cfg)
        report = validate(scen, reference)
        stamp_fields = {"config_sha256": cfg.config_hash, "version": __version__}
        (cfg.out_dir / "scenario_validation.json").write_text(
            report.to_json(extra=stamp_fields) + "\n", encoding="utf-8"
        )
        report.write_csv(cfg.out_dir / "scenario_validation.csv", comment=_stamp(cfg))
    print(f"wrote {scen.n_paths} scenario paths over {cfg.scenario_horizon}y")
    return 0


def cmd_report(cfg: RunConfig) -> int:
    data = _load_joint(cfg)
    sample = _in_sample(cfg, data)
    artifact = json.loads(_artifact_path(cfg).read_text(encoding="utf-8"))
    result = CalibrationResult.from_json(json.dumps(artifact["calibration"]))
    paths = emit_report(
        sample, result, cfg.out_dir, comment=_stamp(cfg), render_figures=cfg.render_figures
    )
    print(f"wrote {len(paths.csvs)} csv files and {len(paths.figures)} figures to {cfg.out_dir}")
    return 0


def cmd_quantize(cfg: RunConfig) -> int:
    artifact_path = _artifact_path(cfg)
    if artifact_path.exists():
        artifact = json.loads(artifact_path.read_text(encoding="utf-8"))
        ou = OUParams(kappa_y=artifact["ou"]["kappa_y"], nu=artifact["ou"]["nu"])
    else:
        ou = OUParams(kappa_y=4.53, nu=0.0417)
    q = build_quantizer(ou, cfg.quantizer_horizon, cfg.quantizer_grid_steps, cfg.quantizer_allocation)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    write_quantizer(
        q,
        cfg.out_dir / "quantizer_paths.csv",
        cfg.out_dir / "quantizer_probs.json",
        comment=_stamp(cfg),
        extra={"config_sha256": cfg.config_hash, "version": __version__},
    )
    print(f"wrote {q.q}-path quantizer on {cfg.quantizer_grid_steps} steps")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kernelvol",
        description="Calibrate, price, and generate scenarios for the "
                    "scale-invariant path-dependent LSV model.",
    )
    parser.add_argument("--version", action="version", version=f"kernelvol {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("calibrate", "fit the kernel, quadratic map, and innovation dynamics"),
        ("price", "price a product under the calibrated model"),
        ("scenario", "generate joint spot/vol scenarios"),
        ("report", "emit diagnostics CSVs and figures"),
        ("quantize", "dump the factor quantizer paths"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, type=Path, help="run configuration file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", type=Path, default=None, help="override the output directory")
        if name == "price":
            p.add_argument("--product", required=True, type=Path, help="product spec JSON")
            p.add_argument("--engines", type=str, default=None,
                           help="comma-separated engines: mc,pde,mlp")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.from_file(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out_dir = args.out
        if args.command == "calibrate":
            return cmd_calibrate(cfg)
        if args.command == "price":
            if args.engines:
                cfg.engines = tuple(e.strip() for e in args.engines.split(","))
            return cmd_price(cfg, args.product)
        if args.command == "scenario":
            return cmd_scenario(cfg)
        if args.command == "report":
            return cmd_report(cfg)
        if args.command == "quantize":
            return cmd_quantize(cfg)
        raise AssertionError(args.command)
    except (FileNotFoundError, ValueError, KeyError, TypeError) as exc:
        _fail(exc)
        return 2
    except (NumericalError, ArithmeticError) as exc:
        _fail(exc)
        return 1


def _fail(exc: Exception) -> None:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)


def entrypoint() -> None:
    sys.exit(main())
