from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import direct_minimiser, predict_dual

from fusioncdrf.errors import DataError
from fusioncdrf.kernels import GAUSSIAN, LAPLACE, KernelSpec, gram
from fusioncdrf.krr import FittedCDRF, fit_closed_form, objective, stationarity_residual
from fusioncdrf.loss import PseudoResiduals

H04 = KernelSpec(LAPLACE, 0.4)


def _one_point():
    blocks = gram(H04, [0.2], [0.6])
    return fit_closed_form(PseudoResiduals(np.array([0.6]), np.array([0.1])), blocks, 0.1, [0.2], [0.6], H04), blocks


def test_beta_scalar():
    model, _ = _one_point()
    assert model.beta[0] == pytest.approx(-6.0)


def test_gamma_scalar_and_oracle():
    model, blocks = _one_point()
    assert model.gamma[0] == pytest.approx(-(0.1 + np.exp(-1) * -6.0) / 1.1)
    assert model.gamma[0] == pytest.approx(1.9157, abs=1e-4)
    # the dual map for one anchor pair is injective here, so coefficients match the direct solve
    beta, gamma = direct_minimiser([0.6], [0.1], blocks, 0.1)
    np.testing.assert_allclose([beta[0], gamma[0]], [model.beta[0], model.gamma[0]], rtol=1e-8)


def test_predict_hand_expansion():
    model, _ = _one_point()
    expected = -6.0 + model.gamma[0] * np.exp(-1)
    assert model.predict([0.2])[0] == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(-5.2953, abs=1e-4)


def test_zero_residuals_give_zero():
    a, b = np.linspace(0, 1, 4), np.linspace(0.1, 0.9, 4)
    blocks = gram(H04, a, b)
    res = PseudoResiduals(np.zeros(4), np.zeros(4))
    model = fit_closed_form(res, blocks, 0.05, a, b, H04)
    assert np.all(model.beta == 0) and np.all(model.gamma == 0)
    assert np.all(model.predict(np.linspace(0, 1, 9)) == 0)
    assert stationarity_residual(model, res, blocks) == 0.0


def test_single_gamma_term():
    a, b = [0.1, 0.5, 0.9], [0.2, 0.4, 0.6]
    model = FittedCDRF(np.zeros(3), [0.0, 1.0, 0.0], a, b, H04, 0.1)
    assert model.predict([0.4])[0] == pytest.approx(1.0 / np.sqrt(3))
    assert model.predict([0.2])[0] == pytest.approx(H04.eval(0.2, 0.4) / np.sqrt(3))


def test_invalid_inputs():
    blocks = gram(H04, [0.2], [0.6])
    res = PseudoResiduals(np.array([0.6]), np.array([0.1]))
    with pytest.raises(DataError):
        fit_closed_form(res, blocks, 0.0, [0.2], [0.6], H04)
    with pytest.raises(DataError):
        fit_closed_form(PseudoResiduals(np.ones(2), np.ones(2)), blocks, 0.1, [0.2], [0.6], H04)
    model, _ = _one_point()
    with pytest.raises(DataError):
        model.predict(np.zeros((1, 2)))


def _random_instance(rng, n, family=LAPLACE):
    a, b = rng.random(n), rng.random(n)
    kernel = KernelSpec(family, float(rng.uniform(0.1, 1.0)))
    res = PseudoResiduals(rng.normal(size=n), rng.normal(size=n))
    return a, b, kernel, res, gram(kernel, a, b)


def test_stationarity_and_perturbation():
    rng = np.random.default_rng(5)
    a, b, kernel, res, blocks = _random_instance(rng, 5)
    model = fit_closed_form(res, blocks, 0.02, a, b, kernel)
    tol = 1e-10 * (1 + np.linalg.norm(res.u) + np.linalg.norm(res.v))
    assert stationarity_residual(model, res, blocks) <= tol
    gamma = model.gamma.copy()
    gamma[2] += 0.1
    bumped = FittedCDRF(model.beta, gamma, a, b, kernel, model.lam)
    assert stationarity_residual(bumped, res, blocks) > 1e-3


@pytest.mark.parametrize("family", [LAPLACE, GAUSSIAN])
def test_prediction_matches_direct_minimiser(family):
    rng = np.random.default_rng(17)
    grid = np.linspace(0, 1, 50)
    for _ in range(40):
        n = int(rng.integers(1, 9))
        a, b, kernel, res, blocks = _random_instance(rng, n, family)
        lam = float(rng.uniform(0.01, 0.5))
        model = fit_closed_form(res, blocks, lam, a, b, kernel)
        beta, gamma = direct_minimiser(res.u, res.v, blocks, lam)
        ref = predict_dual(beta, gamma, a, b, kernel, grid)
        got = model.predict(grid)
        assert np.max(np.abs(got - ref)) <= 1e-8 * max(1.0, np.max(np.abs(ref)))
        assert objective(model.beta, model.gamma, res, blocks, lam) <= objective(beta, gamma, res, blocks, lam) + 1e-10


def test_monotone_shrinkage():
    rng = np.random.default_rng(8)
    a, b = rng.random(20), rng.random(20)
    blocks = gram(H04, a, b)
    res = PseudoResiduals(np.zeros(20), rng.normal(size=20))
    grid = np.linspace(0, 1, 101)
    norms = [
        np.linalg.norm(fit_closed_form(res, blocks, lam, a, b, H04).predict(grid))
        for lam in np.geomspace(1e-4, 1.0, 10)
    ]
    assert all(x >= y - 1e-12 for x, y in zip(norms, norms[1:]))


@given(c=st.floats(-10, 10, allow_nan=False), seed=st.integers(0, 1000))
def test_linear_in_residuals(c, seed):
    rng = np.random.default_rng(seed)
    a, b, kernel, res, blocks = _random_instance(rng, 6)
    grid = np.linspace(0, 1, 11)
    base = fit_closed_form(res, blocks, 0.05, a, b, kernel).predict(grid)
    scaled = fit_closed_form(PseudoResiduals(c * res.u, c * res.v), blocks, 0.05, a, b, kernel).predict(grid)
    np.testing.assert_allclose(scaled, c * base, rtol=1e-9, atol=1e-12 * (1 + abs(c)) * (1 + np.abs(base).max()))


def test_json_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    a, b, kernel, res, blocks = _random_instance(rng, 7)
    model = fit_closed_form(res, blocks, 0.03, a, b, kernel)
    path = tmp_path / "model.json"
    model.save(path)
    back = FittedCDRF.load(path)
    grid = np.linspace(0, 1, 13)
    np.testing.assert_array_equal(back.predict(grid), model.predict(grid))
    doc = model.to_dict()
    assert set(doc) == {"kernel", "bandwidth", "lambda", "n2", "beta", "gamma", "a_anchors", "b_anchors"}
    doc["n2"] = 3
    with pytest.raises(DataError):
        FittedCDRF.from_dict(doc)
