"""Recurrent survival fitter.

An LSTM reads ``ln(1 + count)`` per bin and a dense head with a positive
activation emits the distribution parameters of every bin.  Training
minimises, per cascade and bin,

    -sigma_j * ln h_j - ln S_j,    S_j = exp(-(h_1 + ... + h_j)),

where ``h_j`` is the hazard integrated over bin ``j`` under that bin's
parameters.  Inference runs on a censored prefix and holds the last
predicted parameters fixed to extend the curve to the horizon.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import BinnedCascade, LabeledCascade
from .errors import ConfigurationError, DomainError, NumericHealthError, StructuralError
from .survdist import DistFamily, DistParams, bin_hazard_increments
from .tensorkit import LSTM, Adam, Dense, Module, Tensor, load_checkpoint, no_grad, save_checkpoint
from .tensorkit import tensor as T

log = logging.getLogger(__name__)

#: Floor applied inside every logarithm of the loss.
LOG_EPS = 1e-8


@dataclass
class GammaConfig:
    family: str = "weibull"
    hidden_size: int = 32
    lstm_layers: int = 1
    activation: str = "softplus"
    learning_rate: float = 1e-3
    batch_size: int = 64
    epochs: int = 50
    seed: int = 0
    bin_length: float = 1.0
    horizon: int = 24

    def __post_init__(self):
        self.family = DistFamily.parse(self.family).value
        if self.hidden_size < 1 or self.lstm_layers < 1:
            raise ConfigurationError("hidden_size and lstm_layers must be >= 1")
        if self.activation not in ("softplus", "exp"):
            raise ConfigurationError(f"activation must be softplus or exp, got {self.activation!r}")
        if self.horizon < 1 or self.bin_length <= 0:
            raise ConfigurationError("horizon must be >= 1 and bin_length > 0")
        if self.batch_size < 1 or self.epochs < 0 or self.learning_rate <= 0:
            raise ConfigurationError("invalid optimisation settings")

    @property
    def dist(self) -> DistFamily:
        return DistFamily.parse(self.family)


@dataclass(frozen=True)
class SurvivalCurve:
    values: np.ndarray
    horizon: int
    family: str
    params: dict = field(default_factory=dict)
    observed_bins: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.horizon,):
            raise StructuralError(f"curve has {v.shape} values for horizon {self.horizon}")
        if np.any(v <= 0) or np.any(v > 1) or np.any(np.diff(v) > 0):
            raise DomainError("survival curve must be nonincreasing within (0, 1]")

    def param_trace(self) -> list[DistParams]:
        """Per-bin parameters, observed and extrapolated."""
        return [DistParams(**{k: float(a[j]) for k, a in self.params.items()}) for j in range(self.horizon)]


def transform_counts(counts) -> np.ndarray:
    return np.log1p(np.asarray(counts, dtype=np.float64))


class GammaModel(Module):
    def __init__(self, cfg: GammaConfig):
        self.cfg = cfg
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
        self.lstm = LSTM(1, cfg.hidden_size, cfg.lstm_layers, rng=rng)
        self.head = Dense(cfg.hidden_size, len(cfg.dist.param_names), cfg.activation, rng=rng)

    @property
    def family(self) -> DistFamily:
        return self.cfg.dist

    def forward_params(self, counts) -> dict[str, Tensor]:
        """Per-bin parameters for a (batch, bins) array of raw counts."""
        counts = np.asarray(counts)
        if counts.ndim == 1:
            counts = counts[None, :]
        if counts.ndim != 2:
            raise StructuralError(f"counts must be (batch, bins), got {counts.shape}")
        if counts.shape[1] > self.cfg.horizon:
            raise StructuralError(f"{counts.shape[1]} bins exceed the horizon {self.cfg.horizon}")
        x = Tensor(transform_counts(counts)[:, :, None])
        hidden = T.stack(self.lstm(x), axis=1)  # (B, T, H)
        out = self.head(hidden)  # (B, T, P)
        return {name: out[:, :, k] for k, name in enumerate(self.family.param_names)}

    def config_dict(self) -> dict:
        return dataclasses.asdict(self.cfg)

    def save(self, path) -> Path:
        return save_checkpoint(path, self.state_dict(), {"model": "gamma", **self.config_dict()})

    @classmethod
    def load(cls, path) -> "GammaModel":
        state, config = load_checkpoint(path)
        if config.pop("model", None) != "gamma":
            raise StructuralError(f"{path} is not a gamma checkpoint")
        model = cls(GammaConfig(**config))
        model.load_state_dict(state)
        return model


def forward_params(model: GammaModel, binned: BinnedCascade) -> list[DistParams]:
    """One parameter set per observed bin of a single cascade."""
    with no_grad():
        params = model.forward_params(binned.counts[None, :])
    arrays = {k: v.data[0] for k, v in params.items()}
    return [DistParams(**{k: float(a[j]) for k, a in arrays.items()}) for j in range(binned.observed_bins)]


def bin_hazards(params: dict, family, bin_length: float) -> Tensor:
    """Integrated hazard of every bin as a (batch, bins) tensor."""
    family = DistFamily.parse(family)
    params = {k: T.as_tensor(v) for k, v in params.items()}
    first = params[family.param_names[0]]
    nbins = first.shape[-1]
    j = np.arange(1, nbins + 1, dtype=np.float64)
    L = float(bin_length)
    if family is DistFamily.EXPONENTIAL:
        return params["lam"] * L
    if family is DistFamily.RAYLEIGH:
        return params["alpha"] * (0.5 * L * L * (2.0 * j - 1.0))
    kappa, ln_lam = params["kappa"], T.log(params["lam"])
    upper = T.exp(kappa * (np.log(j * L) - ln_lam))
    if nbins == 1:
        return upper
    # the first bin starts at t=0 where (t/lam)**kappa is 0; keep that term off the graph
    lower_edge = np.log(np.maximum(j - 1.0, 1.0) * L)
    mask = (j > 1).astype(np.float64)
    lower = T.exp(kappa * (lower_edge - ln_lam)) * mask
    return upper - lower


def nll_from_hazards(hazards, sigma) -> Tensor:
    """Mean over the batch of ``sum_j (-sigma_j ln h_j - ln S_j)``."""
    h = T.as_tensor(hazards)
    sigma = np.asarray(sigma, dtype=np.float64)
    if h.ndim == 1:
        h = T.reshape(h, (1, -1))
        sigma = sigma.reshape(1, -1)
    if sigma.shape != h.shape:
        raise StructuralError(f"sigma {sigma.shape} does not align with hazards {h.shape}")
    neg_log_s = T.cumsum(h, axis=1)
    per_bin = neg_log_s - T.log_floor(h, LOG_EPS) * sigma
    return T.mean(T.tsum(per_bin, axis=1))


def survival_nll(params: dict, sigma, family, bin_length: float = 1.0) -> Tensor:
    return nll_from_hazards(bin_hazards(params, family, bin_length), sigma)


def survival_nll_density(params: dict, sigma, family, bin_length: float = 1.0) -> Tensor:
    """The same loss written as ``sum_j ((sigma_j - 1) ln S_j - sigma_j ln f_j)`` with ``f = h S``."""
    h = bin_hazards(params, family, bin_length)
    sigma = np.asarray(sigma, dtype=np.float64).reshape(h.shape)
    S = T.exp(-T.cumsum(h, axis=1))
    f = h * S
    per_bin = T.log_floor(S, np.finfo(np.float64).tiny) * (sigma - 1.0) - T.log_floor(f, LOG_EPS) * sigma
    return T.mean(T.tsum(per_bin, axis=1))


def _fit_length(rows: np.ndarray, horizon: int) -> np.ndarray:
    if rows.shape[1] >= horizon:
        return rows[:, :horizon]
    pad = np.zeros((rows.shape[0], horizon - rows.shape[1]), dtype=rows.dtype)
    return np.concatenate([rows, pad], axis=1)


def training_arrays(dataset: Sequence[LabeledCascade], horizon: int) -> tuple[np.ndarray, np.ndarray]:
    """Counts and sigma stacked to (N, horizon), truncating or zero-padding."""
    counts = _fit_length(np.stack([lc.binned.counts for lc in dataset]).astype(np.float64), horizon)
    sigma_rows = []
    for lc in dataset:
        s = np.asarray(lc.sigma, dtype=np.float64)
        if s.size < horizon:
            s = np.concatenate([s, np.full(horizon - s.size, s[-1] if s.size else 0.0)])
        sigma_rows.append(s[:horizon])
    return counts, np.stack(sigma_rows)


@dataclass
class TrainResult:
    model: GammaModel
    loss_trace: list[float]
    checkpoint: Optional[Path] = None


def train_gamma(dataset: Sequence[LabeledCascade], cfg: GammaConfig, checkpoint=None) -> TrainResult:
    """Fit a gamma model on uncensored cascades padded or truncated to the horizon."""
    if not dataset:
        raise DomainError("gamma training needs at least one cascade")
    if len({int(lc.label) for lc in dataset}) < 2:
        raise DomainError("gamma training needs both viral and non-viral cascades")
    counts, sigma = training_arrays(dataset, cfg.horizon)
    model = GammaModel(cfg)
    trace = fit_arrays(model, counts, sigma, cfg)
    path = model.save(checkpoint) if checkpoint is not None else None
    return TrainResult(model, trace, path)


def fit_arrays(model: GammaModel, counts: np.ndarray, sigma: np.ndarray, cfg: GammaConfig) -> list[float]:
    """Adam over shuffled minibatches of (N, T) count and sigma arrays; returns per-epoch mean loss."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    opt = Adam(model.parameters(), lr=cfg.learning_rate)
    n = counts.shape[0]
    trace = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            opt.zero_grad()
            try:
                loss = survival_nll(model.forward_params(counts[idx]), sigma[idx], model.family, cfg.bin_length)
            except NumericHealthError as exc:
                raise NumericHealthError(f"gamma training diverged in epoch {epoch}: {exc}") from exc
            loss.backward()
            opt.step()
            total += loss.item() * idx.size
        trace.append(total / n)
        if not np.isfinite(trace[-1]):
            raise NumericHealthError(f"gamma loss became {trace[-1]} in epoch {epoch}")
        log.debug("gamma epoch %d loss %.6f", epoch, trace[-1])
    return trace


def _extend_params(arrays: dict[str, np.ndarray], horizon: int) -> dict[str, np.ndarray]:
    out = {}
    for k, a in arrays.items():
        r = a.shape[-1]
        tail = np.repeat(a[..., r - 1 : r], horizon - r, axis=-1)
        out[k] = np.concatenate([a, tail], axis=-1)
    return out


def infer_survival_batch(model: GammaModel, counts, horizon: Optional[int] = None) -> tuple[np.ndarray, dict]:
    """Survival curves (N, horizon) for censored prefixes of shape (N, r)."""
    horizon = model.cfg.horizon if horizon is None else horizon
    counts = np.asarray(counts)
    if counts.ndim != 2 or counts.shape[1] == 0:
        raise DomainError("inference needs at least one observed bin")
    if counts.shape[1] > horizon:
        raise DomainError(f"observed {counts.shape[1]} bins exceed horizon {horizon}")
    with no_grad():
        params = model.forward_params(counts)
    full = _extend_params({k: v.data for k, v in params.items()}, horizon)
    inc = bin_hazard_increments(model.family, DistParams(**full), model.cfg.bin_length, horizon)
    values = np.maximum(np.exp(-np.cumsum(inc, axis=-1)), np.finfo(np.float64).tiny)
    return values, full


def infer_survival(model: GammaModel, censored: BinnedCascade, horizon: Optional[int] = None) -> SurvivalCurve:
    if censored.observed_bins == 0:
        raise DomainError("cannot infer a survival curve from an empty prefix")
    horizon = model.cfg.horizon if horizon is None else horizon
    values, full = infer_survival_batch(model, censored.counts[None, :], horizon)
    return SurvivalCurve(values[0], horizon, model.family.value, {k: v[0] for k, v in full.items()}, censored.observed_bins)
