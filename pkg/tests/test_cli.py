import csv
import hashlib
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from awf3d import read_volume
from awf3d.cli import load_config, main, resolve_config, write_pgm

SMALL = {"phantom": {"dims": [8, 8, 8]}, "geometry": {"n_angles": 3}, "recon": {"n_iter": 5},
         "baseline": {"n_iter": 5}, "sweep": [2, 3], "slices": [3, 4]}
GOLDEN = Path(__file__).parent / "golden" / "simulate_16_L8_K9.json"


def write_cfg(tmp_path, cfg=SMALL, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def digest(root):
    return {p.relative_to(root).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture
def simulated(tmp_path):
    cfg = write_cfg(tmp_path)
    out = tmp_path / "exp"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    return cfg, out


def test_defaults_resolve():
    cfg = resolve_config({})
    assert cfg["geometry"]["n_angles"] == 8 and cfg["geometry"]["wavelength"] == 0.2
    assert cfg["recon"]["n_iter"] == 550 and cfg["slices"] == [8]
    assert cfg["noise"]["seed"] == 0
    assert resolve_config({}, seed=5)["noise"]["seed"] == 5


@pytest.mark.parametrize("raw", [{"bogus": 1}, {"recon": {"n_itr": 3}}, {"phantom": {"layer": {"colour": 1}}},
                                 {"geometry": 3}, {"seed": -1}, {"slices": [99]}, {"sweep": []},
                                 {"recon": {"step_mode": "magic"}}, {"probes": {"grid": [3]}},
                                 {"noise": {"kind": "poisson"}}, {"roi": {"fraction": 0}}])
def test_bad_configs_rejected(tmp_path, raw, capsys):
    assert main(["simulate", "--config", write_cfg(tmp_path, raw), "--out", str(tmp_path / "o")]) == 1
    assert "error" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_invalid_json_and_missing_config(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{nope")
    assert main(["simulate", "--config", str(p), "--out", str(tmp_path / "o")]) == 1
    assert main(["simulate", "--config", str(tmp_path / "absent.json"), "--out", str(tmp_path / "o")]) == 3


def test_flag_validation(tmp_path):
    assert main(["simulate", "--seed", "-2", "--out", str(tmp_path)]) == 1
    assert main(["simulate", "--threads", "0", "--out", str(tmp_path)]) == 1
    assert main(["simulate"]) == 1


def test_single_view_gives_K_images(tmp_path):
    cfg = write_cfg(tmp_path, {**SMALL, "geometry": {"n_angles": 1}})
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "e")]) == 0
    images = sorted((tmp_path / "e" / "measurements").glob("y_*.bin"))
    assert len(images) == 9
    manifest = json.loads((tmp_path / "e" / "manifest.json").read_text())
    assert manifest["config"]["geometry"]["n_angles"] == 1
    assert {f["file"] for f in manifest["files"]} >= {"truth.json", "truth.bin", "measurements/manifest.json"}


def test_reconstruct_outputs(simulated):
    cfg, out = simulated
    before = digest(out)
    assert main(["reconstruct", "--config", cfg, "--out", str(out), "--threads", "1"]) == 0
    after = digest(out)
    assert all(after[k] == v for k, v in before.items())  # inputs untouched
    d = out / "reconstruct"
    manifest = json.loads((d / "manifest.json").read_text())
    files = [f["file"] for f in manifest["files"]]
    volumes = [f for f in files if f.endswith(".bin")]
    csvs = [f for f in files if f.endswith(".csv")]
    slices = [f for f in files if f.endswith(".pgm")]
    assert len(volumes) == 2 and len(csvs) == 1 and len(slices) == 2 * len(SMALL["slices"])
    assert len(files) == 2 * 2 + 1 + len(slices)
    assert all(hashlib.sha256((d / f["file"]).read_bytes()).hexdigest() == f["sha256"] for f in manifest["files"])
    for s in manifest["slices"]:
        assert s["scale"] == pytest.approx((s["max"] - s["min"]) / 255)
    assert manifest["rel_err_corrected"] <= manifest["rel_err_raw"] * (1 + 1e-6)
    raw = read_volume(d / "raw")
    assert raw.dims == (8, 8, 8)
    rows = list(csv.reader((d / "trace.csv").open()))
    assert rows[0][0] == "iter" and len(rows) == 1 + SMALL["recon"]["n_iter"]


def test_baseline_and_evaluate(simulated, capsys):
    cfg, out = simulated
    assert main(["evaluate", "--config", cfg, "--out", str(out)]) == 3
    assert main(["baseline", "--config", cfg, "--out", str(out)]) == 0
    m = json.loads((out / "baseline" / "manifest.json").read_text())
    assert 1 <= m["best_iter"] <= SMALL["baseline"]["n_iter"]
    assert main(["evaluate", "--config", cfg, "--out", str(out)]) == 0
    metrics = json.loads((out / "metrics.json").read_text())
    assert set(metrics["relative_error"]) == {"baseline"}
    assert metrics["relative_error"]["baseline"]["raw"] == pytest.approx(m["rel_err_raw"])
    assert "baseline" in capsys.readouterr().out


def test_missing_inputs_are_io_errors(tmp_path):
    cfg = write_cfg(tmp_path)
    for cmd in ("reconstruct", "baseline", "evaluate"):
        assert main([cmd, "--config", cfg, "--out", str(tmp_path / "empty")]) == 3


def test_corrupt_truth_is_io_error(simulated):
    cfg, out = simulated
    (out / "truth.json").write_text("[]")
    assert main(["reconstruct", "--config", cfg, "--out", str(out)]) == 3


def test_sweep_rows(tmp_path):
    cfg = write_cfg(tmp_path)
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "s")]) == 0
    rows = list(csv.DictReader((tmp_path / "s" / "sweep" / "sweep.csv").open()))
    assert len(rows) == 2 * len(SMALL["sweep"])
    assert {(r["method"], int(r["L"])) for r in rows} == {(m, L) for m in ("3d-awf", "2-step") for L in SMALL["sweep"]}
    assert all(float(r["re_raw"]) > 0 for r in rows)


def test_gradcheck(tmp_path, capsys):
    assert main(["gradcheck", "--out", str(tmp_path)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 4 and all(line.startswith("PASS") for line in lines)
    report = json.loads((tmp_path / "gradcheck.json").read_text())
    assert report["passed"] and all("value" in c for c in report["checks"])


def test_gradcheck_detects_perturbed_gradient(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"gradcheck": {"gradient_scale": 1.01}})
    assert main(["gradcheck", "--config", cfg]) == 2
    assert "FAIL" in capsys.readouterr().out


def test_write_pgm(tmp_path):
    img = np.array([[0.0, 1.0, 2.0], [3.0, 4.0, 5.0]])
    info = write_pgm(tmp_path / "a.pgm", img)
    raw = (tmp_path / "a.pgm").read_bytes()
    assert raw.startswith(b"P5\n2 3\n255\n")
    assert list(raw[-6:]) == [0, 153, 51, 204, 102, 255]
    assert info["min"] == 0 and info["max"] == 5
    write_pgm(tmp_path / "flat.pgm", np.ones((2, 2)))
    assert (tmp_path / "flat.pgm").read_bytes()[-4:] == b"\0\0\0\0"


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "awf3d.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "awf3d" in res.stdout


def test_load_config_round_trip(tmp_path):
    cfg = load_config(write_cfg(tmp_path))
    again = resolve_config(json.loads(json.dumps(cfg)))
    assert again == cfg


def test_simulate_manifest_golden(tmp_path):
    """Checksums of the default desk simulation, captured on the first run."""
    assert main(["simulate", "--out", str(tmp_path)]) == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    sums = {f["file"]: f["sha256"] for f in manifest["files"]}
    assert len([k for k in sums if k.startswith("measurements/y_")]) == 8 * 9
    if not GOLDEN.exists():
        GOLDEN.parent.mkdir(exist_ok=True)
        GOLDEN.write_text(json.dumps(sums, indent=2, sort_keys=True) + "\n")
        pytest.skip("golden checksums captured")
    assert sums == json.loads(GOLDEN.read_text())
