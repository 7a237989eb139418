import math

import numpy as np
import pytest

from kernelvol.calibration import ARFit, QuadraticFit
from kernelvol.market_data import JointSeries
from kernelvol.pricer import LocalVolFn, ModelParams
from kernelvol.quantizer import OUParams
from kernelvol.scenarios import ScenarioSet, generate, validate, write_scenario_csvs

FIT = QuadraticFit(a=75.02, b=3.47, c=-57.13, r2=88.55)
AR = ARFit(phi=0.9822, sigma=0.0026, r2=96.75)


def make_model(r: float = 0.0, q: float = 0.0, rho: float = 0.0) -> ModelParams:
    return ModelParams(
        r=r, q=q, rho=rho,
        ou=OUParams(kappa_y=4.53, nu=0.0417),
        kappa_kernel=2.0,
        localvol=LocalVolFn(a=FIT.a, b=FIT.b, c=FIT.c, i_lo=0.7, i_hi=1.3),
        s0=100.0, a0=100.0,
    )


class TestGenerate:
    def test_zero_innovation_vix_equals_quadratic(self):
        scen = generate(make_model(), FIT, ARFit(phi=0.9, sigma=0.0, r2=100.0),
                        horizon=0.5, n=3, seed=1)
        assert np.all(scen.y_paths == 0.0)
        idx_implied = scen.vix_paths  # equals fit(I) exactly when y == 0
        assert np.all(idx_implied > 0.0)
        # reconstruct I from the running average recursion and compare
        dt = 1.0 / 252.0
        for p in range(3):
            s = scen.spx_paths[p]
            a = 100.0
            for t in range(s.size):
                expected = max(FIT(s[t] / a), 1.0)
                assert idx_implied[p, t] == pytest.approx(expected, rel=1e-12)
                a = a + 2.0 * (s[t] - a) * dt

    def test_stationary_variance_of_innovations(self):
        scen = generate(make_model(), FIT, AR, horizon=1.0, n=400, seed=3)
        y_tail = scen.y_paths[:, 100:]
        target = AR.sigma**2 / (1.0 - AR.phi**2)
        assert float(np.var(y_tail)) == pytest.approx(target, rel=0.10)

    def test_martingale_under_risk_neutral_drift(self):
        model = make_model(r=0.02, q=0.005)
        scen = generate(model, FIT, AR, horizon=1.0, n=20_000, seed=5)
        terminal = scen.spx_paths[:, -1]
        dt = 1.0 / 252.0
        growth = (1.0 + 0.015 * dt) ** 252
        discounted = terminal / growth
        se = discounted.std(ddof=1) / math.sqrt(terminal.size)
        assert abs(discounted.mean() - 100.0) <= 3.0 * se

    def test_positivity_everywhere(self):
        scen = generate(make_model(), FIT, AR, horizon=2.0, n=200, seed=7)
        assert np.all(scen.spx_paths > 0.0)
        assert np.all(scen.vix_paths > 0.0)

    def test_lag_one_autocorrelation_matches_phi(self):
        scen = generate(make_model(), FIT, AR, horizon=4.0, n=150, seed=11)
        phis = []
        for row in scen.y_paths:
            x = row - row.mean()
            phis.append(float(x[:-1] @ x[1:] / (x[:-1] @ x[:-1])))
        n_obs = scen.y_paths.shape[1] - 1
        # sample autocorrelation carries the usual -(1 + 3 phi)/n small-sample bias
        target = AR.phi - (1.0 + 3.0 * AR.phi) / n_obs
        se = math.sqrt((1.0 - AR.phi**2) / n_obs) / math.sqrt(len(phis))
        assert abs(np.mean(phis) - target) <= 3.0 * se

    def test_index_drift_identity(self):
        # dI/I regressed (with intercept) on ((r-q) - kappa*I) dt recovers slope 1:
        # the running-average denominator contributes the kappa*(I-1) pull plus
        # a constant absorbed by the intercept
        model = make_model(r=0.01)
        scen = generate(model, FIT, AR, horizon=2.0, n=250, seed=13)
        dt = 1.0 / 252.0
        kappa = model.kappa_kernel
        xs, ys = [], []
        for p in range(scen.n_paths):
            s = scen.spx_paths[p]
            a = np.empty_like(s)
            a[0] = 100.0
            for t in range(s.size - 1):
                a[t + 1] = a[t] + kappa * (s[t] - a[t]) * dt
            i_vals = s / a
            di = np.diff(i_vals) / i_vals[:-1]
            xs.append(((model.r - model.q) - kappa * i_vals[:-1]) * dt)
            ys.append(di)
        x = np.concatenate(xs)
        y = np.concatenate(ys)
        design = np.column_stack([np.ones_like(x), x])
        (icept, slope), *_ = np.linalg.lstsq(design, y, rcond=None)
        assert slope == pytest.approx(1.0, abs=0.1)
        assert icept == pytest.approx(kappa * dt, rel=0.15)

    def test_real_world_drift_override(self):
        scen = generate(make_model(), FIT, AR, horizon=1.0, n=5000, seed=17,
                        real_world_drift=0.08)
        mean_log = float(np.mean(np.log(scen.spx_paths[:, -1] / 100.0)))
        assert mean_log > 0.03  # visible positive drift

    def test_invalid_args(self):
        with pytest.raises(ValueError):
            generate(make_model(), FIT, AR, horizon=-1.0, n=10, seed=0)
        with pytest.raises(ValueError):
            generate(make_model(), FIT, AR, horizon=1.0, n=0, seed=0)


class TestValidate:
    def test_self_consistency_ks_below_threshold(self):
        # a short averaging window keeps the index decorrelation time small,
        # so one long reference history carries enough effective samples
        from kernelvol.kernels import flat_kernel

        model = make_model()
        ref_scen = generate(model, FIT, AR, horizon=30.0, n=1, seed=19)
        reference = JointSeries(
            dates=ref_scen.grid,
            spx=ref_scen.spx_paths[0],
            vix=ref_scen.vix_paths[0],
        )
        scen = generate(model, FIT, AR, horizon=30.0, n=16, seed=23)
        report = validate(scen, reference, kernel=flat_kernel(20))
        assert report.ks_index is not None
        assert report.ks_index < 0.1
        assert report.index_consistent

    def test_reference_equal_to_sample_gives_zero_divergence(self):
        scen = generate(make_model(), FIT, AR, horizon=2.0, n=1, seed=29)
        reference = JointSeries(
            dates=scen.grid, spx=scen.spx_paths[0], vix=scen.vix_paths[0]
        )
        report = validate(scen, reference)
        assert report.ks_index == 0.0
        assert report.acf1_log_vix_sim == pytest.approx(report.acf1_log_vix_ref, abs=1e-12)
        assert report.kurtosis_returns_sim == pytest.approx(report.kurtosis_returns_ref, abs=1e-12)

    def test_degenerate_reference_flags_no_crash(self):
        scen = generate(make_model(), FIT, AR, horizon=0.1, n=2, seed=31)
        reference = JointSeries(
            dates=scen.grid[:1], spx=scen.spx_paths[0][:1], vix=scen.vix_paths[0][:1]
        )
        report = validate(scen, reference)
        assert report.flags
        assert report.ks_index is None or np.isfinite(report.ks_index)


def test_write_scenario_csvs(tmp_path):
    scen = generate(make_model(), FIT, AR, horizon=0.25, n=4, seed=37)
    write_scenario_csvs(scen, tmp_path, header_comment="test")
    spx_lines = (tmp_path / "scenario_spx.csv").read_text().strip().splitlines()
    n_steps = scen.spx_paths.shape[1]
    assert spx_lines[0] == "# test"
    assert spx_lines[1] == "path_id,t_index,value"
    assert len(spx_lines) == 2 + 4 * n_steps
    assert (tmp_path / "scenario_vix.csv").exists()


def test_scenario_set_validation():
    with pytest.raises(ValueError):
        ScenarioSet(
            grid=tuple(),
            spx_paths=np.ones((2, 3)),
            vix_paths=np.ones((2, 3)),
            y_paths=np.zeros((2, 3)),
            seed=0,
        )
