import hashlib
import json
import shutil
from pathlib import Path

import pytest

from kernelvol.cli import main

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def write_config(tmp_path: Path, out_dir: Path, **overrides) -> Path:
    values = {
        "spx_csv": FIXTURES / "synthetic_spx.csv",
        "vix_csv": FIXTURES / "synthetic_vix.csv",
        "out_dir": out_dir,
        "kernel_lags": 50,
        "optimizer_budget": 300,
        "seed": 0,
        "rate": 0.01,
        "quantizer_allocation": "3",
        "quantizer_grid_steps": 128,
        "quantizer_horizon": 1.0,
        "engines": "mc",
        "n_paths": 4000,
        "scenario_horizon": 0.5,
        "scenario_paths": 10,
        "strikes": "0.9,1.0,1.1",
        "render_figures": "true",
    }
    values.update(overrides)
    lines = [f"{k} = {v}" for k, v in values.items()]
    cfg = tmp_path / "run.cfg"
    cfg.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return cfg


@pytest.fixture(scope="module")
def calibrated(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    out = tmp / "out"
    cfg = write_config(tmp, out)
    assert main(["calibrate", "--config", str(cfg)]) == 0
    return cfg, out


class TestCalibrate:
    def test_artifacts_exist(self, calibrated):
        _, out = calibrated
        assert (out / "calibration.json").exists()
        assert (out / "kernel_weights.csv").exists()
        assert (out / "fit_diagnostics.csv").exists()

    def test_fixture_reaches_perfect_score(self, calibrated):
        _, out = calibrated
        diag = (out / "fit_diagnostics.csv").read_text()
        r2 = next(
            float(line.split(",")[1])
            for line in diag.splitlines()
            if line.startswith("in_sample_r2")
        )
        assert abs(r2 - 100.0) <= 1e-6

    def test_artifacts_embed_hash_and_version(self, calibrated):
        _, out = calibrated
        artifact = json.loads((out / "calibration.json").read_text())
        assert artifact["config_sha256"]
        assert artifact["version"]
        assert (out / "kernel_weights.csv").read_text().startswith("# config_sha256=")

    def test_every_artifact_is_stamped(self, calibrated):
        cfg, out = calibrated
        for cmd in (["quantize"], ["scenario"], ["report"]):
            assert main(cmd + ["--config", str(cfg)]) == 0
        artifact = json.loads((out / "calibration.json").read_text())
        stamp = artifact["config_sha256"]
        for p in sorted(out.iterdir()):
            body = p.read_text(encoding="utf-8")
            assert stamp in body, f"{p.name} lacks the config stamp"

    def test_missing_data_file_exits_2(self, tmp_path, capsys):
        cfg = write_config(tmp_path, tmp_path / "out", spx_csv=tmp_path / "absent.csv")
        assert main(["calibrate", "--config", str(cfg)]) == 2
        err = json.loads(capsys.readouterr().err)
        assert "absent.csv" in err["message"]

    def test_missing_config_exits_2(self, tmp_path):
        assert main(["calibrate", "--config", str(tmp_path / "nope.cfg")]) == 2

    def test_unknown_config_key_exits_2(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("bogus_key = 1\n")
        assert main(["calibrate", "--config", str(cfg)]) == 2


class TestPrice:
    def test_up_and_out_json(self, calibrated, tmp_path):
        cfg, out = calibrated
        code = main([
            "price", "--config", str(cfg),
            "--product", str(FIXTURES / "product_upandout.json"),
        ])
        assert code == 0
        payload = json.loads((out / "price_mc.json").read_text())
        assert set(payload) >= {"value", "std_error", "per_quantizer", "n_paths"}
        assert payload["value"] > 0.0
        assert len(payload["per_quantizer"]) == 3

    def test_engine_comparison_writes_ivol_table(self, calibrated, tmp_path):
        cfg, out = calibrated
        product = tmp_path / "vanilla.json"
        product.write_text(json.dumps(
            {"type": "vanilla_call", "strike": 100.0, "maturity": 1.0, "spot": 100.0}
        ))
        code = main([
            "price", "--config", str(cfg), "--product", str(product),
            "--engines", "mc,mlp",
        ])
        assert code == 0
        table = (out / "ivol_comparison.csv").read_text().splitlines()
        assert table[1] == "strike,iv_mc,iv_mlp"
        assert len(table) == 5  # comment + header + 3 strikes

    def test_malformed_product_exits_2(self, calibrated, tmp_path, capsys):
        cfg, _ = calibrated
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"type": "vanilla_call", "maturity": 1.0}))
        assert main(["price", "--config", str(cfg), "--product", str(bad)]) == 2
        err = json.loads(capsys.readouterr().err)
        assert "strike" in err["message"]

    def test_unknown_product_type_exits_2(self, calibrated, tmp_path):
        cfg, _ = calibrated
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"type": "lookback", "maturity": 1.0}))
        assert main(["price", "--config", str(cfg), "--product", str(bad)]) == 2

    def test_missing_calibration_exits_2(self, tmp_path):
        cfg = write_config(tmp_path, tmp_path / "fresh")
        code = main([
            "price", "--config", str(cfg),
            "--product", str(FIXTURES / "product_upandout.json"),
        ])
        assert code == 2

    def test_request_json_overrides(self, calibrated, tmp_path):
        cfg, out = calibrated
        request = tmp_path / "request.json"
        request.write_text(json.dumps({
            "type": "vanilla_call", "strike": 100.0, "maturity": 1.0,
            "spot": 100.0, "engine": "mlp", "seed": 9,
            "quantizer": {"allocation": [5, 3], "grid_steps": 64},
        }))
        assert main(["price", "--config", str(cfg), "--product", str(request)]) == 0
        payload = json.loads((out / "price_mlp.json").read_text())
        assert payload["seed"] == 9
        assert len(payload["per_quantizer"]) == 15


class TestScenario:
    def test_shapes_and_manifest(self, calibrated):
        cfg, out = calibrated
        assert main(["scenario", "--config", str(cfg)]) == 0
        lines = (out / "scenario_spx.csv").read_text().strip().splitlines()
        n_rows = len(lines) - 2  # comment + header
        assert n_rows == 10 * (126 + 1)
        manifest = json.loads((out / "scenario_manifest.json").read_text())
        assert manifest["seed"] == 0
        assert (out / "scenario_validation.json").exists()

    def test_seed_changes_values_not_schema(self, calibrated, tmp_path):
        cfg, out = calibrated
        base = (out / "scenario_spx.csv").read_text()
        cfg2 = write_config(
            tmp_path, tmp_path, calibration_json=out / "calibration.json"
        )
        assert main(["scenario", "--config", str(cfg2), "--seed", "1"]) == 0
        other = (tmp_path / "scenario_spx.csv").read_text()
        assert base.splitlines()[1] == other.splitlines()[1]
        assert base != other


class TestReport:
    def test_emits_csvs_and_figures(self, calibrated):
        cfg, out = calibrated
        assert main(["report", "--config", str(cfg)]) == 0
        innovations = (out / "report_innovations.csv").read_text().strip().splitlines()
        assert len(innovations) == 2 + (800 - 50)  # comment + header + one row per date
        weights = (out / "report_weights.csv").read_text().strip().splitlines()
        lags = [int(r.split(",")[0]) for r in weights[2:]]
        assert lags == list(range(1, 51))
        for name in ("fig_scatter_index.svg", "fig_weights.svg", "fig_ar1.svg"):
            assert (out / name).exists()

    def test_report_recovers_fixture_quadratic(self, calibrated):
        _, out = calibrated
        rows = (out / "report_index.csv").read_text().strip().splitlines()[2:]
        worst = max(
            abs(float(r.split(",")[2]) - float(r.split(",")[3])) for r in rows
        )
        assert worst <= 1e-6  # noiseless fixture: prediction matches observation


class TestQuantize:
    def test_dump(self, calibrated):
        cfg, out = calibrated
        assert main(["quantize", "--config", str(cfg)]) == 0
        header = (out / "quantizer_paths.csv").read_text().splitlines()[1]
        assert header == "t,y_1,y_2,y_3,dy_1,dy_2,dy_3"
        probs = json.loads((out / "quantizer_probs.json").read_text())
        assert abs(sum(probs["probs"]) - 1.0) <= 1e-12


def tree_hash(root: Path) -> dict[str, str]:
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file():
            out[str(p.relative_to(root))] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out


def test_reruns_are_byte_identical(tmp_path):
    out = tmp_path / "out"
    cfg = write_config(tmp_path, out)
    commands = (
        ["calibrate", "--config", str(cfg)],
        ["quantize", "--config", str(cfg)],
        ["scenario", "--config", str(cfg)],
        ["report", "--config", str(cfg)],
        ["price", "--config", str(cfg), "--product", str(FIXTURES / "product_upandout.json")],
    )
    outs = []
    for _ in range(2):
        for cmd in commands:
            assert main(cmd) == 0
        outs.append(tree_hash(out))
        shutil.rmtree(out)
    assert outs[0] == outs[1]
