import csv
import json
import subprocess
import sys

import numpy as np
import pytest

import areal_gp.cli as cli
from areal_gp import example_paths
from areal_gp.cli import build_parser, main, resolve_settings
from areal_gp.exceptions import NumericalError, ValidationError
from areal_gp.io import read_chain, read_summary

DATA, ADJ = example_paths()
CFG = DATA.with_name("example.cfg")
SMALL = ["--n-iter", "300", "--n-burn", "100"]


def fit(tmp_path, name="fit", *extra):
    out = tmp_path / name
    code = main(["fit", "--data", str(DATA), "--adjacency", str(ADJ), "--out", str(out), *extra])
    return code, out


@pytest.fixture(scope="module")
def fitted(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    code, out = fit(tmp, "fit", *SMALL, "--seed", "5")
    assert code == 0
    return out


def test_fit_writes_chain_and_params(fitted):
    chain, man = read_chain(fitted)
    assert chain.n_draws == 200 and man["seed"] == 5
    assert man["data"] == str(DATA.resolve())
    with (fitted / "params.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert [r["param"] for r in rows] == man["columns"]
    assert chain.y_missing.shape == (200, 2)


def test_fit_is_deterministic(tmp_path):
    _, a = fit(tmp_path, "a", *SMALL, "--seed", "7")
    _, b = fit(tmp_path, "b", *SMALL, "--seed", "7")
    for name in ("draws.csv", "z_draws.npy", "y_missing.npy", "params.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_precedence_flag_over_set_over_config(tmp_path):
    parser = build_parser()
    args = parser.parse_args(["fit", "--config", str(CFG)])
    assert resolve_settings(args)["n_iter"] == 4000
    args = parser.parse_args(["fit", "--config", str(CFG), "--set", "n_iter=300"])
    assert resolve_settings(args)["n_iter"] == 300
    args = parser.parse_args(["fit", "--config", str(CFG), "--set", "n_iter=300", "--n-iter", "200"])
    s = resolve_settings(args)
    assert s["n_iter"] == 200 and s["seed"] == 1 and s["n_burn"] == 2000
    with pytest.raises(ValidationError, match="unknown setting 'nit'"):
        resolve_settings(parser.parse_args(["fit", "--set", "nit=3"]))
    with pytest.raises(ValidationError, match="cannot parse"):
        resolve_settings(parser.parse_args(["fit", "--set", "n_iter=many"]))


def test_config_file_drives_fit(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(f"data = {DATA}\nadjacency = {ADJ}\nn_iter = 150\nn_burn = 50\nseed = 3\n")
    assert main(["fit", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    chain, man = read_chain(tmp_path / "o")
    assert chain.n_draws == 100 and man["config"]["n_iter"] == 150


def test_unknown_region_exits_2(tmp_path, capsys):
    bad = tmp_path / "adj.txt"
    bad.write_text("n_regions=4\n0 1\n1 9\n")
    code = main(["fit", "--data", str(DATA), "--adjacency", str(bad), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "adj.txt:3: region 9" in capsys.readouterr().err


def test_missing_inputs_exit_2(tmp_path, capsys):
    assert main(["fit", "--out", str(tmp_path / "o")]) == 2
    assert "missing required setting 'data'" in capsys.readouterr().err
    code = main(["fit", "--data", str(tmp_path / "nope.csv"), "--adjacency", str(ADJ), "--out", str(tmp_path)])
    assert code == 2


def test_gradient_command(fitted, tmp_path):
    out = tmp_path / "g"
    assert main(["gradient", "--chain", str(fitted), "--t0", "2.5", "6", "--out", str(out)]) == 0
    rows = read_summary(out / "gradient.csv")
    stats = {r[2] for r in rows}
    assert stats == {"mean", "lower", "upper", "significant"}
    assert len(rows) == 4 * 2 * 4
    assert main(["gradient", "--chain", str(fitted), "--midpoints", "--out", str(out)]) == 0
    assert len(read_summary(out / "gradient.csv")) == 4 * 11 * 4


def test_gradient_without_times_exits_2(fitted, tmp_path, capsys):
    assert main(["gradient", "--chain", str(fitted), "--out", str(tmp_path)]) == 2
    assert "no gradient times" in capsys.readouterr().err


def test_predict_command(fitted, tmp_path, capsys):
    out = tmp_path / "p"
    assert main(["predict", "--chain", str(fitted), "--t0", "3", "--out", str(out)]) == 0
    stats = {r[2] for r in read_summary(out / "predict.csv")}
    assert stats == {f"{k}_{s}" for k in ("y", "fit") for s in ("mean", "lower", "upper")}
    # an unobserved time needs covariates
    assert main(["predict", "--chain", str(fitted), "--t0", "3.5", "--out", str(out)]) == 2
    assert "missing covariates at t0=3.5" in capsys.readouterr().err
    cov = tmp_path / "cov.csv"
    cov.write_text("region,t0,intercept,x1\n" + "".join(f"{i},3.5,1.0,0.2\n" for i in range(4)))
    assert main(["predict", "--chain", str(fitted), "--covariates", str(cov), "--out", str(out)]) == 0
    assert {r[1] for r in read_summary(out / "predict.csv")} == {3.5}
    assert main(["predict", "--chain", str(fitted), "--covariates", str(cov), "--t0", "4.5",
                 "--out", str(out)]) == 2


def test_score_single_model_has_zero_deltas(tmp_path):
    out = tmp_path / "s"
    code = main(["score", "--data", str(DATA), "--adjacency", str(ADJ), "--models", "ols",
                 "--out", str(out), *SMALL])
    assert code == 0
    with (out / "score.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1 and float(rows[0]["dDIC"]) == 0.0 and float(rows[0]["dDS"]) == 0.0
    assert (out / "score.md").read_text().startswith("| model |")


def test_simulate_command(tmp_path):
    out = tmp_path / "sim"
    code = main(["simulate", "--study", "sinusoid", "--n-datasets", "2", "--out", str(out),
                 "--set", "n_times=8", "--set", "grid_rows=1", "--set", "grid_cols=3",
                 "--n-iter", "100", "--n-burn", "50"])
    assert code == 0
    assert sorted(p.name for p in (out / "datasets").iterdir()) == ["adjacency.txt", "rep_000.csv", "rep_001.csv"]
    with (out / "coverage.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert rows[0]["quantity"] == "gradient" and int(rows[0]["total"]) == 2 * 3 * 7
    assert set(json.loads((out / "medians.json").read_text())) == {"sigma2", "alpha", "phi1"}


def test_numerical_failure_exits_3(tmp_path, monkeypatch, capsys):
    def boom(*a, **k):
        raise NumericalError("iteration 0: update of Z failed")

    monkeypatch.setattr(cli, "run_chain", boom)
    code, _ = fit(tmp_path)
    assert code == 3
    assert "numerical failure: iteration 0" in capsys.readouterr().err


def test_console_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "areal_gp", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "fit" in res.stdout


def test_bundled_fit_with_example_config_is_fast(tmp_path):
    out = tmp_path / "ex"
    code = main(["fit", "--config", str(CFG), "--data", str(DATA), "--adjacency", str(ADJ), "--out", str(out)])
    assert code == 0
    chain, man = read_chain(out)
    assert man["runtime_s"] < 60
    assert np.all(np.isfinite(chain.Z))
