import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from vedsa.core import BinnedCascade
from vedsa.errors import ConfigurationError, DomainError, StructuralError
from vedsa.gamma import (
    GammaConfig,
    GammaModel,
    SurvivalCurve,
    bin_hazards,
    fit_arrays,
    forward_params,
    infer_survival,
    infer_survival_batch,
    nll_from_hazards,
    survival_nll,
    survival_nll_density,
    train_gamma,
    training_arrays,
)
from vedsa.survdist import DistParams, bin_hazard_increments
from vedsa.synth import gen_dataset, separable_spec
from vedsa.tensorkit import parameter

FAMILIES = ["exponential", "rayleigh", "weibull"]


def brute_loss(h, sigma):
    # oracle: explicit double loop over cascades and bins
    total = 0.0
    for hi, si in zip(h, sigma):
        cum = 0.0
        for hj, sj in zip(hi, si):
            cum += hj
            total += -sj * math.log(max(hj, 1e-8)) + cum
    return total / len(h)


def random_params(family, rng, shape):
    names = {"exponential": ["lam"], "rayleigh": ["alpha"], "weibull": ["kappa", "lam"]}[family]
    return {n: rng.uniform(0.3, 2.0, size=shape) for n in names}


@pytest.fixture(scope="module")
def small_data():
    return gen_dataset(separable_spec("exponential", n_per_class=100, seed=1))


def test_loss_examples():
    assert nll_from_hazards(np.zeros((1, 3)), np.zeros((1, 3))).item() == 0.0
    assert nll_from_hazards(np.array([[math.e]]), np.array([[1.0]])).item() == pytest.approx(math.e - 1.0, abs=1e-12)
    assert nll_from_hazards(np.array([[math.e]]), np.array([[1.0]])).item() == pytest.approx(1.71828, abs=1e-5)


def test_loss_floor_never_nan():
    out = nll_from_hazards(np.zeros((1, 2)), np.ones((1, 2))).item()
    assert out == pytest.approx(-2 * math.log(1e-8))


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(FAMILIES), st.integers(1, 4), st.integers(1, 12), st.integers(0, 2**31))
def test_loss_matches_oracle(family, b, t, seed):
    rng = np.random.default_rng(seed)
    p = random_params(family, rng, (b, t))
    sigma = (np.arange(t)[None, :] >= rng.integers(0, t + 1, size=(b, 1))).astype(float)
    h = bin_hazard_increments(family, DistParams(**p), 1.0, t)
    assert bin_hazards(p, family, 1.0).data == pytest.approx(h, rel=1e-12)
    assert survival_nll(p, sigma, family).item() == pytest.approx(brute_loss(h, sigma), rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(FAMILIES), st.integers(1, 4), st.integers(1, 10), st.integers(0, 2**31))
def test_density_form_agrees(family, b, t, seed):
    rng = np.random.default_rng(seed)
    p = {k: v * 0.3 for k, v in random_params(family, rng, (b, t)).items()}
    if family == "weibull":
        p["kappa"] = rng.uniform(0.8, 1.5, size=(b, t))
        p["lam"] = rng.uniform(3.0, 8.0, size=(b, t))
    sigma = (np.arange(t)[None, :] >= rng.integers(0, t + 1, size=(b, 1))).astype(float)
    h = bin_hazard_increments(family, DistParams(**p), 1.0, t)
    # the two forms differ only where the log floor bites
    assume(np.all(h * np.exp(-np.cumsum(h, axis=1)) > 1e-8))
    a = survival_nll(p, sigma, family).item()
    d = survival_nll_density(p, sigma, family).item()
    assert d == pytest.approx(a, rel=1e-10, abs=1e-10)


def test_loss_permutation_invariant():
    rng = np.random.default_rng(0)
    p = random_params("weibull", rng, (6, 5))
    sigma = (rng.random((6, 5)) > 0.5).cumsum(axis=1).clip(0, 1).astype(float)
    perm = rng.permutation(6)
    a = survival_nll(p, sigma, "weibull").item()
    b = survival_nll({k: v[perm] for k, v in p.items()}, sigma[perm], "weibull").item()
    assert a == pytest.approx(b, rel=1e-14)


def test_sigma_shape_checked():
    with pytest.raises(StructuralError):
        nll_from_hazards(np.ones((2, 3)), np.ones((2, 4)))


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(FAMILIES), st.sampled_from(["softplus", "exp"]), st.lists(st.integers(0, 10_000), min_size=1, max_size=24))
def test_untrained_params_positive(family, act, counts):
    model = GammaModel(GammaConfig(family=family, hidden_size=6, activation=act))
    out = forward_params(model, BinnedCascade(np.array(counts), 1.0, len(counts)))
    assert len(out) == len(counts)
    for p in out:
        for v in p.as_dict().values():
            assert v > 0 and math.isfinite(v)


def test_forward_is_causal_and_deterministic():
    model = GammaModel(GammaConfig(family="weibull", hidden_size=5))
    counts = np.array([[0, 0, 0, 0, 0, 0]])
    full = model.forward_params(counts)
    again = model.forward_params(counts)
    short = model.forward_params(counts[:, :1])
    for k in full:
        assert np.array_equal(full[k].data, again[k].data)
        assert full[k].data[0, 0] == short[k].data[0, 0]


def test_config_validation():
    with pytest.raises(ConfigurationError):
        GammaConfig(hidden_size=0)
    with pytest.raises(ConfigurationError):
        GammaConfig(activation="relu")
    with pytest.raises(DomainError):
        GammaConfig(family="lognormal")


def _constant_exponential(lam, horizon=10):
    model = GammaModel(GammaConfig(family="exponential", hidden_size=3, horizon=horizon))
    model.head.weight.data = np.zeros_like(model.head.weight.data)
    model.head.bias.data = np.array([math.log(math.expm1(lam))])
    return model


def test_constant_parameters_give_closed_form():
    lam = 0.3
    model = _constant_exponential(lam)
    curve = infer_survival(model, BinnedCascade(np.array([4, 1, 0]), 1.0, 3))
    assert np.allclose(curve.values, np.exp(-lam * np.arange(1, 11)), rtol=1e-13)
    assert curve.observed_bins == 3
    assert all(p.lam == pytest.approx(lam, rel=1e-12) for p in curve.param_trace())


def test_extrapolation_holds_last_params():
    model = GammaModel(GammaConfig(family="weibull", hidden_size=4, horizon=8))
    curve = infer_survival(model, BinnedCascade(np.array([3, 5, 2]), 1.0, 3))
    for k, a in curve.params.items():
        assert np.all(a[3:] == a[2])


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(FAMILIES), st.integers(0, 1000), st.lists(st.integers(0, 5000), min_size=1, max_size=24))
def test_inferred_curves_are_valid(family, seed, counts):
    model = GammaModel(GammaConfig(family=family, hidden_size=4, seed=seed))
    curve = infer_survival(model, BinnedCascade(np.array(counts), 1.0, len(counts)))
    assert curve.values[0] <= 1.0
    assert np.all(np.diff(curve.values) <= 0)
    assert np.all(curve.values > 0)


def test_empty_prefix_rejected():
    model = GammaModel(GammaConfig(family="exponential", hidden_size=3))
    with pytest.raises(DomainError):
        infer_survival(model, BinnedCascade(np.zeros(0, dtype=int), 1.0, 0))
    with pytest.raises(DomainError):
        infer_survival_batch(model, np.ones((1, 30)))


def test_survival_curve_invariants():
    with pytest.raises(DomainError):
        SurvivalCurve(np.array([0.9, 0.95]), 2, "exponential")
    with pytest.raises(DomainError):
        SurvivalCurve(np.array([1.0, 0.0]), 2, "exponential")
    with pytest.raises(StructuralError):
        SurvivalCurve(np.array([1.0]), 2, "exponential")


def test_training_requires_both_classes(small_data):
    only = [lc for lc in small_data.cascades if lc.v == 0]
    with pytest.raises(DomainError):
        train_gamma(only, GammaConfig(family="exponential", epochs=1))
    with pytest.raises(DomainError):
        train_gamma([], GammaConfig(family="exponential", epochs=1))


def test_training_reduces_loss_and_is_deterministic(small_data, tmp_path):
    cfg = GammaConfig(family="exponential", hidden_size=8, epochs=30, learning_rate=1e-2, batch_size=32, seed=3)
    a = train_gamma(small_data.cascades, cfg, checkpoint=tmp_path / "g.npz")
    b = train_gamma(small_data.cascades, cfg)
    assert a.loss_trace[-1] < a.loss_trace[0]
    assert a.loss_trace == b.loss_trace
    loaded = GammaModel.load(a.checkpoint)
    counts = np.array([[3, 9, 1, 0]])
    assert np.array_equal(infer_survival_batch(loaded, counts)[0], infer_survival_batch(a.model, counts)[0])

    # viral cascades accumulate more hazard
    counts, _ = training_arrays(small_data.cascades, 24)
    labels = np.array([lc.v for lc in small_data.cascades])
    curves, _ = infer_survival_batch(a.model, counts[:, :6], 24)
    assert curves[labels == 1, -1].mean() < curves[labels == 0, -1].mean()


def test_zero_epochs_keeps_initialisation(small_data):
    cfg = GammaConfig(family="rayleigh", hidden_size=4, epochs=0)
    res = train_gamma(small_data.cascades, cfg)
    fresh = GammaModel(cfg)
    assert res.loss_trace == []
    for a, b in zip(res.model.parameters(), fresh.parameters()):
        assert np.array_equal(a.data, b.data)


def test_all_non_viral_drives_hazard_down(small_data):
    nv = [lc for lc in small_data.cascades if lc.v == 0]
    counts, sigma = training_arrays(nv, 24)
    assert sigma.sum() == 0
    cfg = GammaConfig(family="exponential", hidden_size=8, learning_rate=1e-2, epochs=40, batch_size=32)
    model = GammaModel(cfg)
    fit_arrays(model, counts, sigma, cfg)
    _, full = infer_survival_batch(model, counts, 24)
    assert full["lam"].mean() < 0.01


def test_load_rejects_other_checkpoints(tmp_path):
    from vedsa.delta import DeltaConfig, DeltaModel

    path = DeltaModel(DeltaConfig()).save(tmp_path / "d.npz")
    with pytest.raises(StructuralError):
        GammaModel.load(path)


def test_hazard_parameter_gradient():
    from vedsa.tensorkit import grad_check

    lam = parameter(np.array([[0.4, 0.7, 1.1]]))
    sigma = np.array([[0, 1, 1]])
    assert grad_check(lambda: survival_nll({"lam": lam}, sigma, "exponential"), [lam]) < 1e-6
