"""Backprop-versus-central-difference checks for every layer and both model graphs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .delta import DeltaConfig, DeltaModel, bce_with_logits
from .gamma import GammaConfig, GammaModel, survival_nll
from .tensorkit import LSTM, Conv1d, Dense, Tensor, grad_check, parameter
from .tensorkit import tensor as T

RECURRENT_TOL = 1e-4
FEEDFORWARD_TOL = 1e-6


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance


@dataclass(frozen=True)
class Stencil:
    """Finite-difference settings for one graph."""

    order: int
    epsilon: float
    floor: float


# smooth graphs take the wide 4-point stencil; graphs with ReLU or max-pool
# kinks need a narrow step, and below |g| ~ 1e-5 the difference is roundoff
SMOOTH = Stencil(4, 1e-4, 1e-8)
KINKED = Stencil(2, 1e-5, 1e-5)


def _jitter(params, rng, scale: float = 0.05):
    # zero-initialised biases put ReLUs exactly on their kink for dead inputs
    for p in params:
        p.data = p.data + rng.normal(0.0, scale, p.shape)
    return params


def _dense_stack(rng):
    l1, l2 = Dense(4, 6, "softplus", rng), Dense(6, 2, "softplus", rng)
    x = rng.normal(size=(5, 4))
    w = rng.normal(size=(5, 2))
    return (lambda: T.tsum(l2(l1(x)) * w)), l1.parameters() + l2.parameters()


def _conv_pool(rng):
    conv = Conv1d(2, 3, 3, stride=int(rng.integers(1, 3)), rng=rng)
    head = Dense(3 * 2, 1, "identity", rng)
    x = rng.normal(size=(4, 2, 11))
    y = rng.integers(0, 2, size=4)

    def loss():
        h = T.maxpool1d(T.relu(conv(x)), 2)
        h = T.reshape(h[:, :, :2], (4, -1))
        z = T.reshape(head(h), (-1,))
        p = T.sigmoid(z)
        return -T.mean(T.log(p) * y + T.log(1.0 - p) * (1 - y))

    return loss, _jitter(conv.parameters() + head.parameters(), rng)


def _lstm(rng):
    lstm = LSTM(2, 3, layers=int(rng.integers(1, 3)), rng=rng)
    x = rng.normal(size=(3, 5, 2))
    w = rng.normal(size=(3, 3))
    return (lambda: T.tsum(lstm(x)[-1] * w)), lstm.parameters()


def _survival_loss(rng):
    family = ("exponential", "rayleigh", "weibull")[int(rng.integers(0, 3))]
    names = {"exponential": ("lam",), "rayleigh": ("alpha",), "weibull": ("kappa", "lam")}[family]
    params = {n: parameter(rng.uniform(0.3, 1.5, size=(3, 6))) for n in names}
    sigma = (np.arange(6)[None, :] >= rng.integers(0, 7, size=(3, 1))).astype(float)
    return (lambda: survival_nll(params, sigma, family)), list(params.values())


def _gamma_graph(rng):
    family = ("exponential", "rayleigh", "weibull")[int(rng.integers(0, 3))]
    model = GammaModel(GammaConfig(family=family, hidden_size=4, horizon=6, seed=int(rng.integers(1 << 31))))
    counts = rng.poisson(3.0, size=(3, 5))
    sigma = (np.arange(5)[None, :] >= rng.integers(0, 6, size=(3, 1))).astype(float)
    return (lambda: survival_nll(model.forward_params(counts), sigma, family)), model.parameters()


def _delta_graph(rng):
    seed = int(rng.integers(1 << 31))
    model = DeltaModel(DeltaConfig(channels=(3, 4), kernel_size=3, dense=(5,), horizon=16, seed=seed))
    curves = np.exp(-np.cumsum(rng.uniform(0.01, 0.3, size=(4, 16)), axis=1))
    y = np.array([0, 1, 0, 1])

    def loss():
        drop = np.random.default_rng(seed)
        return bce_with_logits(model.logits(curves, train=True, rng=drop), y)

    return loss, _jitter(model.parameters(), rng)


CHECKS: dict[str, tuple[Callable, float, Stencil]] = {
    "dense": (_dense_stack, FEEDFORWARD_TOL, SMOOTH),
    "conv_pool": (_conv_pool, FEEDFORWARD_TOL, KINKED),
    "lstm": (_lstm, RECURRENT_TOL, SMOOTH),
    "survival_loss": (_survival_loss, FEEDFORWARD_TOL, SMOOTH),
    "gamma": (_gamma_graph, RECURRENT_TOL, SMOOTH),
    "delta": (_delta_graph, FEEDFORWARD_TOL, KINKED),
}


def run_gradchecks(seed: int = 0, repeats: int = 5, max_entries: int = 12, names: Sequence[str] | None = None) -> list[CheckResult]:
    """Worst relative error per graph over ``repeats`` random configurations."""
    results = []
    for name in names if names is not None else CHECKS:
        build, tol, st = CHECKS[name]
        worst = 0.0
        for k in range(repeats):
            rng = np.random.default_rng(np.random.SeedSequence([seed, k, len(name)]))
            loss, params = build(rng)
            worst = max(worst, grad_check(loss, params, st.epsilon, max_entries, rng, st.floor, st.order))
        results.append(CheckResult(name, worst, tol))
    return results
