import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vedsa.core import Cascade
from vedsa.delta import (
    DeltaConfig,
    DeltaModel,
    LinearBaseline,
    Prediction,
    bce_with_logits,
    forward_delta,
    linear_baseline_predict,
    linear_baseline_train,
    observe,
    predict_pipeline,
    train_delta,
    write_predictions,
)
from vedsa.errors import ConfigurationError, DomainError, StructuralError
from vedsa.gamma import GammaConfig, GammaModel, infer_survival
from vedsa.tensorkit import Tensor

FAST = dict(epochs=25, learning_rate=1e-2, batch_size=32)


def separable_curves(n, rng, horizon=24):
    # viral: S(T) < 0.1; non-viral: S(T) > 0.9
    lam_v = rng.uniform(0.12, 0.4, n)
    lam_n = rng.uniform(0.0005, 0.004, n)
    j = np.arange(1, horizon + 1)
    curves = np.exp(-np.concatenate([lam_v, lam_n])[:, None] * j)
    labels = np.concatenate([np.ones(n, int), np.zeros(n, int)])
    return curves, labels


def test_untrained_probability_range_and_determinism():
    model = DeltaModel(DeltaConfig())
    curve = np.exp(-0.05 * np.arange(1, 25))
    p = forward_delta(model, curve)
    assert 0.0 < p < 1.0
    assert forward_delta(model, curve) == p
    assert np.array_equal(model.predict_proba(np.stack([curve, curve])), np.array([p, p]))


def test_config_validation():
    with pytest.raises(ConfigurationError):
        DeltaConfig(threshold=1.0)
    with pytest.raises(ConfigurationError):
        DeltaConfig(dropout=1.0)
    with pytest.raises(StructuralError):
        DeltaConfig(horizon=6)
    with pytest.raises(StructuralError):
        DeltaModel(DeltaConfig()).logits(np.ones((1, 10)) * 0.5)


def test_bce_matches_oracle():
    rng = np.random.default_rng(0)
    z = rng.normal(0, 3, 50)
    y = rng.integers(0, 2, 50)
    p = 1 / (1 + np.exp(-z))
    ref = -np.mean(y * np.log(p) + (1 - y) * np.log(1 - p))
    assert bce_with_logits(Tensor(z), y).item() == pytest.approx(ref, rel=1e-12)


def test_training_separable_curves():
    rng = np.random.default_rng(1)
    X, y = separable_curves(150, rng)
    Xt, yt = separable_curves(100, rng)
    res = train_delta(X, y, DeltaConfig(**FAST))
    assert res.loss_trace[-1] < res.loss_trace[0]
    acc = np.mean((res.model.predict_proba(Xt) >= 0.5) == yt)
    assert acc >= 0.99


def test_training_deterministic_and_checkpoint(tmp_path):
    rng = np.random.default_rng(2)
    X, y = separable_curves(40, rng)
    cfg = DeltaConfig(epochs=3, seed=5)
    a, b = train_delta(X, y, cfg), train_delta(X, y, cfg)
    for pa, pb in zip(a.model.parameters(), b.model.parameters()):
        assert np.array_equal(pa.data, pb.data)
    loaded = DeltaModel.load(a.model.save(tmp_path / "d.npz"))
    assert np.array_equal(loaded.predict_proba(X), a.model.predict_proba(X))
    with pytest.raises(StructuralError):
        GammaModel.load(tmp_path / "d.npz")


def test_class_weighting_runs():
    rng = np.random.default_rng(3)
    X, y = separable_curves(30, rng)
    keep = np.concatenate([np.arange(5), np.arange(30, 60)])
    res = train_delta(X[keep], y[keep], DeltaConfig(epochs=2, class_weight=True))
    assert np.isfinite(res.loss_trace).all()


def test_single_class_rejected():
    X = np.exp(-0.1 * np.arange(1, 25))[None, :].repeat(4, axis=0)
    with pytest.raises(DomainError):
        train_delta(X, np.ones(4, int), DeltaConfig(epochs=1))
    with pytest.raises(StructuralError):
        train_delta(X, np.array([0, 1]), DeltaConfig(epochs=1))


def test_inference_ignores_dropout():
    model = DeltaModel(DeltaConfig(dropout=0.5))
    X = np.exp(-np.outer(np.linspace(0.01, 0.3, 5), np.arange(1, 25)))
    assert np.array_equal(model.predict_proba(X), model.predict_proba(X))


@pytest.fixture(scope="module")
def pipeline():
    gamma = GammaModel(GammaConfig(family="weibull", hidden_size=4))
    delta = DeltaModel(DeltaConfig(seed=3))
    return gamma, delta


def test_pipeline_is_manual_chain(pipeline):
    gamma, delta = pipeline
    c = Cascade("x", np.sort(np.concatenate([[0.0], np.random.default_rng(0).uniform(0, 30, 40)])))
    pred = predict_pipeline(gamma, delta, c, 6.0)
    curve = infer_survival(gamma, observe(c, 6.0, 1.0), 24)
    p = forward_delta(delta, curve)
    assert pred == Prediction("x", p, int(p >= 0.5))


def test_observe_bins_only_window():
    c = Cascade("x", [0, 0.5, 1.5, 2.5, 7.0])
    assert observe(c, 3.0, 1.0).counts.tolist() == [2, 1, 1]
    assert observe(c, 0.5, 1.0).observed_bins == 0


def test_pipeline_empty_prefix(pipeline):
    gamma, delta = pipeline
    with pytest.raises(DomainError):
        predict_pipeline(gamma, delta, Cascade("x", [0.0, 1.0]), 0.5)


def test_pipeline_rejects_mismatched_models():
    gamma = GammaModel(GammaConfig(family="exponential", hidden_size=2, horizon=20))
    with pytest.raises(StructuralError):
        predict_pipeline(gamma, DeltaModel(DeltaConfig()), Cascade("x", [0.0]), 2.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.0, 30.0), max_size=40), st.floats(0.05, 0.95), st.floats(0.05, 0.95))
def test_threshold_monotone(times, t1, t2):
    gamma = GammaModel(GammaConfig(family="exponential", hidden_size=3))
    delta = DeltaModel(DeltaConfig(seed=1))
    c = Cascade("x", np.sort(np.concatenate([[0.0], times])))
    lo, hi = sorted((t1, t2))
    assert predict_pipeline(gamma, delta, c, 4.0, hi).label <= predict_pipeline(gamma, delta, c, 4.0, lo).label


def test_write_predictions(tmp_path):
    path = write_predictions([Prediction("a", 0.25, 0), Prediction("b", 0.75, 1)], tmp_path / "p.jsonl")
    rows = [json.loads(line) for line in path.read_text().splitlines()]
    assert rows == [{"id": "a", "p": 0.25, "label": 0}, {"id": "b", "p": 0.75, "label": 1}]


def test_linear_baseline_separable():
    rng = np.random.default_rng(0)
    viral = rng.poisson(30, size=(40, 6))
    calm = rng.poisson(1, size=(40, 6))
    X = np.concatenate([viral, calm])
    y = np.concatenate([np.ones(40, int), np.zeros(40, int)])
    model = linear_baseline_train(X, y)
    preds = linear_baseline_predict(model, X)
    assert [p.label for p in preds] == y.tolist()


def test_linear_baseline_constant_input():
    X = np.tile([3, 1, 4], (10, 1))
    y = np.array([0, 1] * 5)
    p = LinearBaseline().fit(X, y).predict_proba(X)
    assert np.all(p == p[0])
    assert p[0] == pytest.approx(0.5, abs=1e-6)
    with pytest.raises(DomainError):
        LinearBaseline().predict_proba(X)
    with pytest.raises(DomainError):
        LinearBaseline().fit(X, np.ones(10))
    assert math.isfinite(p[0])
