from __future__ import annotations

import numpy as np
import pytest
from PIL import Image

from fusioncdrf.evaluation import RiskReport
from fusioncdrf.plots import figsize, plot_benchmark, plot_curve, plot_cv


def _is_png(path):
    return path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_curve_and_cv(tmp_path):
    grid = np.linspace(0, 1, 11)
    rows = [(float(a), float(np.sin(a)), float(np.sin(a) + 0.1)) for a in grid]
    path = plot_curve(rows, tmp_path / "c.png", title="t", note="config_hash=abc")
    assert _is_png(path) and Image.open(path).text["Comment"] == "config_hash=abc"
    no_truth = plot_curve([(r[0], None, r[2]) for r in rows], tmp_path / "c2.png")
    assert _is_png(no_truth)
    cv = plot_cv([0.01, 0.02, 0.03], np.random.default_rng(0).random((5, 3)), 0.02, tmp_path / "sub" / "cv.png")
    assert _is_png(cv)


def test_benchmark_plot_is_reproducible(tmp_path):
    rng = np.random.default_rng(1)
    rows = [
        RiskReport("gaussian", m, n, r, meth, float(rng.random()))
        for m in ("uniform", "beta(5,5)")
        for n in (400, 1600)
        for r in range(5)
        for meth in ("fusion", "no_fusion")
    ]
    first = plot_benchmark(rows, tmp_path / "a.png")
    second = plot_benchmark(rows, tmp_path / "b.png")
    assert first.read_bytes() == second.read_bytes()
    with pytest.raises(ValueError):
        plot_benchmark([], tmp_path / "empty.png")


def test_figsize():
    w, h = figsize(1.0, 0.5)
    assert (w, h) == (5.5, 2.75)
