"""Survival-curve discriminator and the logistic baseline over raw bins."""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .core import BinnedCascade, Cascade, bin_cascade, censor
from .errors import ConfigurationError, DomainError, NumericHealthError, StructuralError
from .gamma import GammaModel, SurvivalCurve, infer_survival, infer_survival_batch
from .tensorkit import Adam, Conv1d, Dense, Module, Tensor, load_checkpoint, no_grad, save_checkpoint
from .tensorkit import tensor as T

log = logging.getLogger(__name__)

#: Floor on the cumulative hazard before taking its logarithm.
HAZARD_FLOOR = 1e-12
P_CLIP = 1e-12


@dataclass
class DeltaConfig:
    channels: tuple = (8, 16)
    kernel_size: int = 5
    pool: int = 2
    dropout: float = 0.3
    dense: tuple = (32,)
    learning_rate: float = 1e-3
    epochs: int = 50
    batch_size: int = 64
    seed: int = 0
    threshold: float = 0.5
    horizon: int = 24
    bin_length: float = 1.0
    class_weight: bool = False

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        self.dense = tuple(int(d) for d in self.dense)
        if not 0.0 < self.threshold < 1.0:
            raise ConfigurationError(f"threshold must be in (0, 1), got {self.threshold}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.epochs < 0 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ConfigurationError("invalid optimisation settings")
        length = self.horizon
        for _ in self.channels:
            if self.kernel_size > length:
                raise StructuralError(f"kernel {self.kernel_size} longer than feature map {length}")
            length = (length - self.kernel_size + 1) // self.pool
            if length < 1:
                raise StructuralError(f"horizon {self.horizon} too short for {len(self.channels)} conv blocks")
        self._flat = length * (self.channels[-1] if self.channels else 1)


@dataclass(frozen=True)
class Prediction:
    id: str
    probability: float
    label: int


def curve_features(curves) -> np.ndarray:
    """Log cumulative hazard ``ln(-ln S)``: a monotone rescaling of the survival curve."""
    S = np.asarray(curves, dtype=np.float64)
    with np.errstate(divide="ignore"):
        cum = -np.log(S)
    return np.log(np.maximum(cum, HAZARD_FLOOR))


class DeltaModel(Module):
    def __init__(self, cfg: DeltaConfig):
        self.cfg = cfg
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
        c_in = 1
        self.convs = []
        for c_out in cfg.channels:
            self.convs.append(Conv1d(c_in, c_out, cfg.kernel_size, rng=rng))
            c_in = c_out
        width = cfg._flat
        self.hidden = []
        for d in cfg.dense:
            self.hidden.append(Dense(width, d, "relu", rng=rng))
            width = d
        self.out = Dense(width, 1, "identity", rng=rng)
        # feature standardisation, fitted on the training curves
        self.shift = 0.0
        self.scale = 1.0

    def logits(self, curves, train: bool = False, rng=None) -> Tensor:
        curves = np.asarray(curves, dtype=np.float64)
        if curves.ndim == 1:
            curves = curves[None, :]
        if curves.shape[1] != self.cfg.horizon:
            raise StructuralError(f"curve length {curves.shape[1]} != horizon {self.cfg.horizon}")
        x = Tensor(((curve_features(curves) - self.shift) / self.scale)[:, None, :])
        for conv in self.convs:
            x = T.maxpool1d(T.relu(conv(x)), self.cfg.pool)
        x = T.dropout(x, self.cfg.dropout, rng, train)
        x = T.reshape(x, (x.shape[0], -1))
        for layer in self.hidden:
            x = layer(x)
        return T.reshape(self.out(x), (-1,))

    def predict_proba(self, curves) -> np.ndarray:
        with no_grad():
            z = self.logits(curves).data
        return np.clip(np.exp(-np.logaddexp(0.0, -z)), P_CLIP, 1.0 - P_CLIP)

    def config_dict(self) -> dict:
        d = dataclasses.asdict(self.cfg)
        d["channels"], d["dense"] = list(self.cfg.channels), list(self.cfg.dense)
        return d

    def save(self, path) -> Path:
        cfg = {"model": "delta", **self.config_dict(), "shift": self.shift, "scale": self.scale}
        return save_checkpoint(path, self.state_dict(), cfg)

    @classmethod
    def load(cls, path) -> "DeltaModel":
        state, config = load_checkpoint(path)
        if config.pop("model", None) != "delta":
            raise StructuralError(f"{path} is not a delta checkpoint")
        shift, scale = config.pop("shift"), config.pop("scale")
        model = cls(DeltaConfig(**config))
        model.load_state_dict(state)
        model.shift, model.scale = shift, scale
        return model


def _curve_array(curve) -> np.ndarray:
    return curve.values if isinstance(curve, SurvivalCurve) else np.asarray(curve, dtype=np.float64)


def forward_delta(model: DeltaModel, curve) -> float:
    """Probability that the cascade behind ``curve`` goes viral."""
    values = _curve_array(curve)
    if values.ndim != 1:
        raise StructuralError("forward_delta takes a single curve")
    return float(model.predict_proba(values[None, :])[0])


def bce_with_logits(logits: Tensor, labels, weights=None) -> Tensor:
    y = np.asarray(labels, dtype=np.float64)
    per = T.softplus(logits) - logits * y
    if weights is not None:
        per = per * np.asarray(weights, dtype=np.float64)
    return T.mean(per)


def _class_weights(labels: np.ndarray) -> np.ndarray:
    n, pos = labels.size, labels.sum()
    return np.where(labels == 1, n / (2.0 * pos), n / (2.0 * (n - pos)))


@dataclass
class DeltaTrainResult:
    model: DeltaModel
    loss_trace: list[float]


def train_delta(curves, labels, cfg: DeltaConfig) -> DeltaTrainResult:
    """Fit the discriminator with binary cross-entropy; dropout is active only here."""
    X = np.stack([_curve_array(c) for c in curves]) if not isinstance(curves, np.ndarray) else curves
    y = np.asarray(labels, dtype=np.int64)
    if X.shape[0] != y.size:
        raise StructuralError("curves and labels differ in length")
    if set(np.unique(y).tolist()) != {0, 1}:
        raise DomainError("delta training needs both viral and non-viral examples")
    model = DeltaModel(cfg)
    feats = curve_features(X)
    model.shift = float(feats.mean())
    model.scale = float(feats.std()) or 1.0
    weights = _class_weights(y) if cfg.class_weight else None
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    drop_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2]))
    opt = Adam(model.parameters(), lr=cfg.learning_rate)
    trace = []
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(y.size)
        total = 0.0
        for start in range(0, y.size, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            opt.zero_grad()
            loss = bce_with_logits(
                model.logits(X[idx], train=True, rng=drop_rng), y[idx], None if weights is None else weights[idx]
            )
            loss.backward()
            opt.step()
            total += loss.item() * idx.size
        trace.append(total / y.size)
        if not np.isfinite(trace[-1]):
            raise NumericHealthError(f"delta loss became {trace[-1]} in epoch {epoch}")
        log.debug("delta epoch %d loss %.6f", epoch, trace[-1])
    return DeltaTrainResult(model, trace)


def _check_compatible(gamma: GammaModel, delta: DeltaModel):
    if gamma.cfg.horizon != delta.cfg.horizon or gamma.cfg.bin_length != delta.cfg.bin_length:
        raise StructuralError(
            f"gamma (horizon {gamma.cfg.horizon}, bin {gamma.cfg.bin_length}) and delta "
            f"(horizon {delta.cfg.horizon}, bin {delta.cfg.bin_length}) disagree"
        )


def observe(c: Cascade, window: float, bin_length: float) -> BinnedCascade:
    """Bin the part of ``c`` seen in the first ``window`` hours (whole bins only)."""
    r = int(np.floor(window / bin_length + 1e-9))
    if r <= 0:
        return BinnedCascade(np.zeros(0, dtype=np.int64), bin_length, 0)
    return bin_cascade(censor(c, r * bin_length), bin_length, r * bin_length)


def predict_pipeline(
    gamma: GammaModel, delta: DeltaModel, cascade: Cascade, window: float, threshold: Optional[float] = None
) -> Prediction:
    """Bin the censored cascade, infer its survival curve, classify the curve."""
    _check_compatible(gamma, delta)
    threshold = delta.cfg.threshold if threshold is None else threshold
    curve = infer_survival(gamma, observe(cascade, window, gamma.cfg.bin_length), delta.cfg.horizon)
    p = forward_delta(delta, curve)
    return Prediction(cascade.id, p, int(p >= threshold))


def predict_counts(gamma: GammaModel, delta: DeltaModel, counts) -> np.ndarray:
    """Viral probabilities for a batch of censored bin-count rows (N, r)."""
    _check_compatible(gamma, delta)
    curves, _ = infer_survival_batch(gamma, counts, delta.cfg.horizon)
    return delta.predict_proba(curves)


def write_predictions(preds: Iterable[Prediction], path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for p in preds:
            fh.write(json.dumps({"id": p.id, "p": round(p.probability, 10), "label": p.label}) + "\n")
    return path


class LinearBaseline:
    """L2-regularised logistic regression on ``ln(1 + count)`` per bin."""

    def __init__(self, l2: float = 1e-4, threshold: float = 0.5):
        self.l2 = l2
        self.threshold = threshold
        self.coef: Optional[np.ndarray] = None
        self.intercept = 0.0

    @staticmethod
    def features(counts) -> np.ndarray:
        return np.log1p(np.asarray(counts, dtype=np.float64))

    def fit(self, counts, labels) -> "LinearBaseline":
        X = self.features(counts)
        y = np.asarray(labels, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] != y.size:
            raise StructuralError("counts must be (N, bins) aligned with labels")
        if set(np.unique(y).tolist()) != {0.0, 1.0}:
            raise DomainError("baseline training needs both classes")
        n, d = X.shape

        def objective(w):
            z = X @ w[:d] + w[d]
            loss = np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * self.l2 * w[:d] @ w[:d]
            r = np.exp(-np.logaddexp(0.0, -z)) - y
            grad = np.concatenate([X.T @ r / n + self.l2 * w[:d], [r.mean()]])
            return loss, grad

        res = minimize(objective, np.zeros(d + 1), jac=True, method="L-BFGS-B", options={"maxiter": 1000})
        self.coef, self.intercept = res.x[:d], float(res.x[d])
        return self

    def predict_proba(self, counts) -> np.ndarray:
        if self.coef is None:
            raise DomainError("baseline is not fitted")
        z = self.features(counts) @ self.coef + self.intercept
        return np.clip(np.exp(-np.logaddexp(0.0, -z)), P_CLIP, 1.0 - P_CLIP)

    def predict(self, counts, ids: Optional[Sequence[str]] = None) -> list[Prediction]:
        p = self.predict_proba(counts)
        ids = ids if ids is not None else [str(i) for i in range(p.size)]
        return [Prediction(i, float(pi), int(pi >= self.threshold)) for i, pi in zip(ids, p)]


def linear_baseline_train(counts, labels, l2: float = 1e-4) -> LinearBaseline:
    return LinearBaseline(l2).fit(counts, labels)


def linear_baseline_predict(model: LinearBaseline, counts, ids=None) -> list[Prediction]:
    return model.predict(counts, ids)
