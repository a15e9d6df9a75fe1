from __future__ import annotations

import csv
import json

import numpy as np
import pytest
from PIL import Image

from fusioncdrf.cli import main
from fusioncdrf.data import load_dataset
from fusioncdrf.simulation import generate


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(ln for ln in fh if not ln.startswith("#")))


def _comments(path):
    with open(path) as fh:
        return [ln.strip() for ln in fh if ln.startswith("#")]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def dataset(workdir):
    path = workdir / "d.csv"
    assert main(["simulate", "--family", "gaussian", "--n", "400", "--seed", "1", "--out", str(path)]) == 0
    return path


def test_simulate_schema(dataset):
    rows = _rows(dataset)
    assert rows[0] == ["x1", "x2", "x3", "a", "y", "s"]
    assert len(rows) == 401
    comments = _comments(dataset)
    assert any(c.startswith("# config_hash=") for c in comments) and "# master_seed=1" in comments
    side = json.loads(dataset.with_suffix(".json").read_text())
    assert side["seed"] == 1 and side["n"] == 400 and side["family"] == "gaussian"
    data = load_dataset(dataset)
    np.testing.assert_array_equal(data.y, generate("gaussian", 400, 1).y)


def test_simulate_is_byte_deterministic(dataset, workdir):
    again = workdir / "d2.csv"
    main(["simulate", "--family", "gaussian", "--n", "400", "--seed", "1", "--out", str(again)])
    assert again.read_bytes() == dataset.read_bytes()


def test_simulate_unknown_family(workdir):
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--family", "unknown", "--n", "10", "--out", str(workdir / "x.csv")])
    assert exc.value.code == 2


@pytest.fixture(scope="module")
def fitted(dataset, workdir):
    out = workdir / "fit"
    assert main(["fit", "--data", str(dataset), "--mode", "both", "--family", "gaussian", "--seed", "2", "--out", str(out)]) == 0
    return out


def test_fit_both_modes(fitted, dataset):
    docs = [json.loads((fitted / f"fit_{m}.json").read_text()) for m in ("fused", "nonfused")]
    assert docs[0]["dataset_sha256"] == docs[1]["dataset_sha256"] is not None
    assert docs[0]["mode"] == "fused" and docs[1]["mode"] == "nonfused"
    assert docs[0]["seed_trace"]["master"] == 2
    for mode in ("fused", "nonfused"):
        for stem in ("cv", "curve"):
            assert (fitted / f"{stem}_{mode}.csv").exists()
            png = fitted / f"{stem}_{mode}.png"
            assert "config_hash=" in Image.open(png).text["Comment"]
        assert len(_rows(fitted / f"curve_{mode}.csv")) == 202
        assert any("config_hash=" in c for c in _comments(fitted / f"cv_{mode}.csv"))


def test_evaluate(fitted, workdir):
    out = workdir / "eval.json"
    code = main(["evaluate", "--model", str(fitted / "fit_fused.json"), "--family", "gaussian", "--out", str(out)])
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["risk"] >= 0 and doc["m_eval"] == 1000


def test_missing_outcome_sources(workdir, capsys):
    data = workdir / "no_y.csv"
    with data.open("w") as fh:
        fh.write("x1,a,y,s\n")
        for i in range(10):
            fh.write(f"{i / 10},{(i + 0.5) / 10},0.1,2\n")
    code = main(["fit", "--data", str(data), "--out", str(workdir / "no_y")])
    assert code == 3
    assert "empty source set" in capsys.readouterr().err


def test_nonfused_equals_fused_on_aligned_data(workdir):
    base = generate("gaussian", 200, 4)
    path = workdir / "aligned.csv"
    with path.open("w") as fh:
        fh.write("x1,x2,x3,a,y,s\n")
        for x, a, y in zip(base.x, base.a[:, 0], base.y):
            fh.write(",".join(repr(float(v)) for v in (*x, a, y)) + ",3\n")
    out = workdir / "aligned"
    overrides = ["--set", "fusion.sources_x=3", "--set", "fusion.sources_y=3"]
    assert main(["fit", "--data", str(path), "--mode", "both", "--out", str(out), *overrides]) == 0
    fused = _rows(out / "curve_fused.csv")
    nonfused = _rows(out / "curve_nonfused.csv")
    assert fused == nonfused


def test_benchmark_table_shape(workdir):
    out = workdir / "bench"
    argv = ["benchmark", "--family", "gaussian", "--measures", "uniform", "--ns", "100,400", "--runs", "20",
            "--seed", "3", "--workers", "1", "--out", str(out)]
    assert main(argv) == 0
    table = _rows(out / "table.csv")
    assert table[0] == ["scenario", "ref_measure", "n", "fusion_median", "nofusion_median", "pct_reduction"]
    assert len(table) == 3
    assert len(_rows(out / "results.csv")) == 1 + 2 * 2 * 20
    assert "master_seed=3" in Image.open(out / "risk_vs_n.png").text["Comment"]


def test_benchmark_runs_zero(workdir, capsys):
    assert main(["benchmark", "--runs", "0", "--out", str(workdir / "b0")]) == 2
    assert "runs" in capsys.readouterr().err


def test_bad_override(workdir):
    assert main(["simulate", "--family", "gaussian", "--n", "5", "--set", "cv.bogus=1", "--out", str(workdir / "z.csv")]) == 2


def test_diagnostics(workdir, capsys):
    out = workdir / "diag.json"
    argv = ["diagnostics", "--delta", "0.5", "--sigma", "1", "--L", "1", "--p", "0.5", "--alpha", "0.25",
            "--xi", "2", "--eta", "2", "--w-sup", "1", "--xi-u", "2", "--eta-u", "2", "--w-sup-u", "1", "--out", str(out)]
    assert main(argv) == 0
    doc = json.loads(out.read_text())
    assert doc["lipschitz_fused"] == pytest.approx(144.81, abs=0.01) and doc["bound_ratio"] == 1.0
    assert main(["diagnostics", "--delta", "0.5", "--sigma", "1", "--L", "1", "--p", "0.5", "--alpha", "0.25"]) == 2
    oracle = ["diagnostics", "--delta", "0.5", "--sigma", "1", "--L", "1", "--p", "0.5", "--alpha", "0.25", "--oracle", "gaussian"]
    capsys.readouterr()
    assert main(oracle) == 0
    assert json.loads(capsys.readouterr().out)["bound_ratio"] < 1.0
