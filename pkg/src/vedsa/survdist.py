"""Closed-form survival functions for the Exponential, Rayleigh and Weibull families.

Parametrisation::

    Exponential  h = lam                     H = lam*t
    Rayleigh     h = alpha*t                 H = 0.5*alpha*t**2
    Weibull      h = (k/lam)*(t/lam)**(k-1)  H = (t/lam)**k

with ``S = exp(-H)``, ``F = 1 - S`` and ``f = h*S``.  All functions accept
scalars or numpy arrays and broadcast.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError, SingularityError

#: Smallest time used where the Weibull hazard is singular at the origin.
T_EPS = 1e-9


class DistFamily(str, enum.Enum):
    EXPONENTIAL = "exponential"
    RAYLEIGH = "rayleigh"
    WEIBULL = "weibull"

    @property
    def param_names(self) -> tuple[str, ...]:
        return _PARAM_NAMES[self]

    @classmethod
    def parse(cls, value) -> "DistFamily":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise DomainError(f"unknown distribution family {value!r}") from None


_PARAM_NAMES = {
    DistFamily.EXPONENTIAL: ("lam",),
    DistFamily.RAYLEIGH: ("alpha",),
    DistFamily.WEIBULL: ("kappa", "lam"),
}


@dataclass(frozen=True)
class DistParams:
    """Parameters of one family; fields a family does not use stay ``None``.

    Values may be scalars or equal-shape arrays (one entry per bin).
    """

    lam: Optional[float] = None
    alpha: Optional[float] = None
    kappa: Optional[float] = None

    def validate(self, family: DistFamily) -> "DistParams":
        family = DistFamily.parse(family)
        for name in ("lam", "alpha", "kappa"):
            value = getattr(self, name)
            if name in family.param_names:
                if value is None:
                    raise DomainError(f"{family.value} needs parameter {name}")
                arr = np.asarray(value, dtype=np.float64)
                if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
                    raise DomainError(f"{name} must be positive and finite, got {value}")
            elif value is not None:
                raise DomainError(f"{family.value} does not use parameter {name}")
        return self

    def as_dict(self) -> dict:
        return {k: v for k, v in (("lam", self.lam), ("alpha", self.alpha), ("kappa", self.kappa)) if v is not None}


def _params(family, params: DistParams):
    family = DistFamily.parse(family)
    params.validate(family)
    return family, {k: np.asarray(v, dtype=np.float64) for k, v in params.as_dict().items()}


def _time(t) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0):
        raise DomainError("time must be nonnegative")
    return t


def _weibull_h(t, kappa, lam):
    return (kappa / lam) * (t / lam) ** (kappa - 1.0)


def clamp_time(t):
    """Lift times below ``T_EPS`` to it, for callers of the Weibull kappa<1 hazard."""
    return np.maximum(_time(t), T_EPS)


def hazard(family, params: DistParams, t):
    family, p = _params(family, params)
    t = _time(t)
    if family is DistFamily.EXPONENTIAL:
        out = p["lam"] * np.ones_like(t)
    elif family is DistFamily.RAYLEIGH:
        out = p["alpha"] * t
    else:
        kappa, lam = np.broadcast_arrays(p["kappa"], p["lam"])
        if np.any((t == 0) & (kappa < 1)):
            raise SingularityError(f"Weibull hazard diverges at t=0 for kappa<1; evaluate at t>={T_EPS}")
        out = _weibull_h(t, p["kappa"], p["lam"])
    return out[()] if np.ndim(out) == 0 else out


def cumulative_hazard(family, params: DistParams, t):
    family, p = _params(family, params)
    t = _time(t)
    if family is DistFamily.EXPONENTIAL:
        out = p["lam"] * t
    elif family is DistFamily.RAYLEIGH:
        out = 0.5 * p["alpha"] * t * t
    else:
        out = (t / p["lam"]) ** p["kappa"]
    return out[()] if np.ndim(out) == 0 else out


def survival(family, params: DistParams, t):
    return np.exp(-cumulative_hazard(family, params, t))


def cdf(family, params: DistParams, t):
    return -np.expm1(-cumulative_hazard(family, params, t))


def pdf(family, params: DistParams, t):
    family, p = _params(family, params)
    t = _time(t)
    if family is DistFamily.WEIBULL:
        # density is finite-or-infinite at 0; mirror the hazard convention
        kappa = np.broadcast_to(p["kappa"], np.broadcast(t, p["kappa"]).shape)
        if np.any((t == 0) & (kappa < 1)):
            raise SingularityError(f"Weibull density diverges at t=0 for kappa<1; evaluate at t>={T_EPS}")
    return hazard(family, params, t) * survival(family, params, t)


def bin_hazard_increments(family, params: DistParams, bin_length: float, num_bins: int) -> np.ndarray:
    """Integrated hazard of each bin ``[(j-1)L, jL)`` for ``j = 1..num_bins``.

    Parameters may be scalars (constant over bins) or arrays whose last axis
    has length ``num_bins``; bin ``j`` integrates its own parameters over its
    interval, so constant parameters telescope to ``H(num_bins * L)``.
    """
    family, p = _params(family, params)
    j = np.arange(1, num_bins + 1, dtype=np.float64)
    hi, lo = j * bin_length, (j - 1.0) * bin_length
    if family is DistFamily.EXPONENTIAL:
        return p["lam"] * bin_length * np.ones(num_bins)
    if family is DistFamily.RAYLEIGH:
        return 0.5 * p["alpha"] * (hi * hi - lo * lo)
    return (hi / p["lam"]) ** p["kappa"] - (lo / p["lam"]) ** p["kappa"]


def discrete_survival(increments) -> np.ndarray:
    """``S(t) = exp(-sum_{k<=t} h_k)`` for every prefix ``t = 1..len``."""
    h = np.asarray(increments, dtype=np.float64)
    if np.any(h < 0):
        raise DomainError("hazard increments must be nonnegative")
    return np.exp(-np.cumsum(h, axis=-1))


@dataclass(frozen=True)
class StepCurve:
    """Right-continuous step survival function from Kaplan-Meier."""

    times: np.ndarray
    values: np.ndarray

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        idx = np.searchsorted(self.times, t, side="right")
        out = np.concatenate([[1.0], self.values])[idx]
        return out[()] if out.ndim == 0 else out


def kaplan_meier(event_times, censored) -> StepCurve:
    """Product-limit estimate.  ``censored[i]`` is true when subject ``i`` did not fail."""
    t = np.asarray(event_times, dtype=np.float64).reshape(-1)
    c = np.asarray(censored, dtype=bool).reshape(-1)
    if t.size == 0:
        raise DomainError("Kaplan-Meier needs at least one observation")
    if t.size != c.size:
        raise DomainError("times and censoring flags differ in length")
    if np.any(t < 0):
        raise DomainError("times must be nonnegative")
    uniq, inverse = np.unique(t, return_inverse=True)
    deaths = np.bincount(inverse, weights=~c, minlength=uniq.size)
    leaving = np.bincount(inverse, minlength=uniq.size)
    at_risk = t.size - np.concatenate([[0], np.cumsum(leaving)[:-1]])
    keep = deaths > 0
    factors = 1.0 - deaths[keep] / at_risk[keep]
    with np.errstate(divide="ignore"):
        values = np.exp(np.cumsum(np.log(factors)))
    return StepCurve(uniq[keep], values)
