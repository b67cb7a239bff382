import json
import subprocess
import sys

import numpy as np
import pytest

from shockcast import plotting
from shockcast.cli import EXIT_CONFIG, EXIT_INPUT, main
from shockcast.config import derive_seed, resolve_config

TINY = {
    "data": {"n_cases": 3, "n_eval": 1, "nx": 16, "ny": 16, "t_end": 4e-4, "coarsen_time": 2, "coarsen_space": 2},
    "cfl": {"variants": [{"use_gradient_features": True, "use_cfl_features": True, "pooling": "max"},
                         {"pooling": "mean", "replicates": 2}],
            "epochs": 2},
    "solver": {"models": [{"trunk": "unet_lite", "conditioning": "cond_layer_norm"},
                          {"trunk": "ffno_lite", "conditioning": "moe"}],
               "width": {"unet_lite": 4, "ffno_lite": 4}, "epochs": 1, "modes": 3, "n_layers": 2, "n_experts": 2},
    "plot": {"snapshot_stride": 3, "pixel_scale": 2},
}


def tree_bytes(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def tiny_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    cfg = base / "tiny.json"
    cfg.write_text(json.dumps(TINY))
    for name in ("a", "b"):
        assert main(["all", "--config", str(cfg), "--seed", "7", "--out", str(base / name)]) == 0
    return base


def test_generate_writes_one_file_per_case_and_a_manifest(tiny_runs):
    data = tiny_runs / "a" / "data"
    assert len(list(data.glob("*.shkc"))) == 3
    manifest = json.loads((data / "manifest.json").read_text())
    assert [c["split"] for c in manifest["cases"]] == ["train", "eval", "train"]


def test_every_stage_directory_holds_its_resolved_config(tiny_runs):
    for stage in ("data", "cfl", "solver", "rollout", "eval", "plots"):
        cfg = json.loads((tiny_runs / "a" / stage / "config.json").read_text())
        assert cfg["data"]["nx"] == 16
    assert json.loads((tiny_runs / "a" / "cfl" / "config.json").read_text())["seed"] == 7


def test_all_outputs_are_bit_identical_across_reruns(tiny_runs):
    a, b = tree_bytes(tiny_runs / "a"), tree_bytes(tiny_runs / "b")
    assert a.keys() == b.keys()
    assert [k for k in a if a[k] != b[k]] == []


def test_evaluate_reports_and_summary(tiny_runs):
    ev = tiny_runs / "a" / "eval"
    rows = (ev / "cfl_mae.csv").read_text().splitlines()
    assert rows[0] == "variant,replicate,mae,baseline_mae" and len(rows) == 4
    summary = json.loads((ev / "summary.json").read_text())
    row = next(r for r in summary["rows"] if r["model"] == "cfl/base-mean" and r["metric"] == "normalized_mae")
    assert row["n"] == 2 and row["two_stderr"] == pytest.approx(2 * row["stderr"])
    report = (ev / "unet_lite-cond_layer_norm_r0_case_001.csv").read_text()
    assert "correlation_time_proportion" in report and "dt_pearson" in report


def test_plots_are_valid_ppm(tiny_runs):
    ppms = sorted((tiny_runs / "a" / "plots").glob("*.ppm"))
    assert len(ppms) == 4
    img = plotting.read_ppm(ppms[0])
    assert img.ndim == 3 and img.shape[2] == 3


def test_different_seed_changes_models_not_data(tiny_runs, tmp_path):
    cfg = tiny_runs / "tiny.json"
    out = tmp_path / "c"
    assert main(["generate", "--config", str(cfg), "--seed", "8", "--out", str(out)]) == 0
    assert main(["train-cfl", "--config", str(cfg), "--seed", "8", "--out", str(out)]) == 0
    a = tiny_runs / "a"
    assert (out / "data" / "case_000.shkc").read_bytes() == (a / "data" / "case_000.shkc").read_bytes()
    assert (out / "cfl" / "base-mean_r0.shkp").read_bytes() != (a / "cfl" / "base-mean_r0.shkp").read_bytes()


def test_exit_codes(tmp_path, monkeypatch, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{oops")
    assert main(["generate", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG
    bad.write_text(json.dumps({"data": {"nxx": 4}}))
    assert main(["generate", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "nxx" in capsys.readouterr().err
    assert main(["train-cfl", "--out", str(tmp_path / "empty")]) == EXIT_INPUT
    monkeypatch.setenv("SHOCKCAST_THREADS", "zero")
    assert main(["generate", "--out", str(tmp_path)]) == EXIT_CONFIG
    with pytest.raises(SystemExit) as exc:
        main(["generate", "--seed", str(2 ** 64)])
    assert exc.value.code == 2


def test_corrupt_dataset_is_an_input_error(tiny_runs, tmp_path):
    import shutil
    root = tmp_path / "r"
    shutil.copytree(tiny_runs / "a" / "data", root / "data")
    f = root / "data" / "case_000.shkc"
    f.write_bytes(b"JUNK" + f.read_bytes()[4:])
    assert main(["train-cfl", "--config", str(tiny_runs / "tiny.json"), "--out", str(root)]) == EXIT_INPUT


def test_module_entry_point_help():
    out = subprocess.run([sys.executable, "-m", "shockcast", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "train-solver" in out.stdout


def test_seed_fan_out_is_stable_and_distinct():
    assert derive_seed(0, "cfl", "base-max", 0) == derive_seed(0, "cfl", "base-max", 0)
    assert derive_seed(0, "cfl", "base-max", 0) != derive_seed(0, "cfl", "base-max", 1)
    assert derive_seed(2 ** 63, "x") != derive_seed(0, "x")
    assert resolve_config()["data"]["n_cases"] == 20


def test_constant_field_gives_uniform_gray(tmp_path):
    field = np.full((4, 6, 6), 3.5)
    img = plotting.comparison_image(field, field, 2)
    path = tmp_path / "c.ppm"
    plotting.write_ppm(path, img)
    back = plotting.read_ppm(path)
    assert path.read_bytes().startswith(b"P6\n")
    gray = plotting.to_gray(field[0], 3.5, 3.5)
    assert np.all(gray == 128)
    panel = plotting.upscale(plotting.to_gray(field[0], 3.5, 3.5), 2)
    assert np.all(back[:panel.shape[0], :panel.shape[1]] == 128)


def test_gray_scale_mapping_endpoints():
    g = plotting.to_gray(np.array([0.0, 0.5, 1.0, 2.0]), 0.0, 1.0)
    assert list(g) == [0, 128, 255, 255]
