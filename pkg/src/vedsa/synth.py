"""Synthetic cascades with known hazards.

Reshares after the source event follow an inhomogeneous Poisson process with
intensity ``A * h(t)`` on ``[0, horizon]``, where ``h`` is the hazard of the
class's distribution.  The source event sits at ``t = 0``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .core import Cascade, Label, LabeledCascade, ViralityConfig, label_and_bin
from .errors import ConfigurationError, DomainError
from .survdist import DistFamily, DistParams, cumulative_hazard, hazard

CLASSES = ("viral", "non_viral")


@dataclass(frozen=True)
class ClassSpec:
    params: DistParams
    amplitude: float
    count: int

    def to_dict(self) -> dict:
        return {"params": self.params.as_dict(), "amplitude": self.amplitude, "count": self.count}


@dataclass(frozen=True)
class SynthSpec:
    family: str
    viral: ClassSpec
    non_viral: ClassSpec
    horizon: float = 24.0
    zeta2: int = 100
    seed: int = 0
    bin_length: float = 1.0
    max_retries: int = 50

    def __post_init__(self):
        fam = DistFamily.parse(self.family)
        object.__setattr__(self, "family", fam.value)
        if not self.horizon > 0:
            raise ConfigurationError("horizon must be positive")
        for name in CLASSES:
            cs = self.for_class(name)
            cs.params.validate(fam)
            if cs.amplitude < 0 or not math.isfinite(cs.amplitude):
                raise ConfigurationError(f"{name} amplitude must be finite and >= 0")
            if cs.count < 0:
                raise ConfigurationError(f"{name} count must be >= 0")
        if not (self.expected_size("viral") > self.zeta2 > self.expected_size("non_viral")):
            raise ConfigurationError(
                f"need E[n_viral]={self.expected_size('viral'):.1f} > zeta2={self.zeta2} "
                f"> E[n_non_viral]={self.expected_size('non_viral'):.1f}"
            )

    @property
    def dist(self) -> DistFamily:
        return DistFamily.parse(self.family)

    @property
    def num_bins(self) -> int:
        return int(round(self.horizon / self.bin_length))

    def for_class(self, name: str) -> ClassSpec:
        if name not in CLASSES:
            raise DomainError(f"unknown class {name!r}")
        return self.viral if name == "viral" else self.non_viral

    def expected_size(self, name: str) -> float:
        cs = self.for_class(name)
        return 1.0 + cs.amplitude * float(cumulative_hazard(self.dist, cs.params, self.horizon))

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "viral": self.viral.to_dict(),
            "non_viral": self.non_viral.to_dict(),
            "horizon": self.horizon,
            "zeta2": self.zeta2,
            "seed": self.seed,
            "bin_length": self.bin_length,
            "max_retries": self.max_retries,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        d = dict(d)
        try:
            for name in CLASSES:
                c = dict(d[name])
                d[name] = ClassSpec(DistParams(**c["params"]), float(c["amplitude"]), int(c["count"]))
            return cls(**d)
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"bad synth spec: {exc}") from None


def _dominating_rate(spec: SynthSpec, cs: ClassSpec) -> float:
    """Upper bound of ``A * h`` on the horizon for nondecreasing hazards."""
    rate = cs.amplitude * float(hazard(spec.dist, cs.params, spec.horizon))
    if not math.isfinite(rate):
        raise ConfigurationError("dominating rate overflows on this horizon")
    return rate


def _decreasing(spec: SynthSpec, cs: ClassSpec) -> bool:
    return spec.dist is DistFamily.WEIBULL and cs.params.kappa < 1


def _sample_reshares(spec: SynthSpec, cs: ClassSpec, rng: np.random.Generator) -> np.ndarray:
    if cs.amplitude == 0:
        return np.empty(0)
    if _decreasing(spec, cs):
        # hazard unbounded at 0: invert the cumulative intensity instead of thinning
        total = cs.amplitude * float(cumulative_hazard(spec.dist, cs.params, spec.horizon))
        n = rng.poisson(total)
        u = rng.random(n) * (total / cs.amplitude)
        return np.sort(cs.params.lam * u ** (1.0 / cs.params.kappa))
    rate = _dominating_rate(spec, cs)
    if rate == 0:
        return np.empty(0)
    n = rng.poisson(rate * spec.horizon)
    proposals = np.sort(rng.uniform(0.0, spec.horizon, size=n))
    accept = rng.random(n) * rate <= cs.amplitude * hazard(spec.dist, cs.params, proposals)
    return proposals[accept]


def gen_cascade(spec: SynthSpec, cls: str, rng: np.random.Generator, id: str = "synthetic") -> Cascade:
    cs = spec.for_class(cls)
    reshares = _sample_reshares(spec, cs, rng)
    reshares = reshares[reshares > 0]
    return Cascade(id, np.concatenate([[0.0], reshares]))


def cascade_rng(seed: int, cls: str, index: int, attempt: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, CLASSES.index(cls), index, attempt]))


@dataclass
class SynthDataset:
    spec: SynthSpec
    cascades: list[LabeledCascade]
    resampled: dict = field(default_factory=dict)

    @property
    def raw(self) -> list[Cascade]:
        return [lc.cascade for lc in self.cascades]


def gen_dataset(spec: SynthSpec) -> SynthDataset:
    """Generate and label every cascade; class overlaps are redrawn up to ``max_retries`` times."""
    cfg = ViralityConfig(spec.zeta2, spec.zeta2, spec.num_bins)
    want = {"viral": Label.VIRAL, "non_viral": Label.NON_VIRAL}
    out: list[LabeledCascade] = []
    resampled = {name: 0 for name in CLASSES}
    for name in CLASSES:
        cs = spec.for_class(name)
        for i in range(cs.count):
            for attempt in range(spec.max_retries + 1):
                c = gen_cascade(spec, name, cascade_rng(spec.seed, name, i, attempt), id=f"{name}-{i}")
                lc = label_and_bin(c, cfg, spec.bin_length)
                if lc.label == want[name]:
                    break
                resampled[name] += 1
            else:
                raise DomainError(f"{name} cascade {i} kept crossing zeta2 after {spec.max_retries} retries")
            truth = {"class": name, "family": spec.family, **cs.params.as_dict(), "amplitude": cs.amplitude}
            out.append(
                LabeledCascade(lc.binned, lc.label, lc.sigma, lc.viral_time, id=lc.id, cascade=c, truth=truth)
            )
    return SynthDataset(spec, out, resampled)


def write_truth(dataset: SynthDataset, path) -> Path:
    """Sidecar ground truth: one JSON object per cascade, same order as the cascades."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for lc in dataset.cascades:
            fh.write(json.dumps({"id": lc.id, **lc.truth}, sort_keys=True) + "\n")
    return path


def separable_spec(
    family: str = "exponential",
    n_per_class: int = 250,
    seed: int = 0,
    horizon: float = 24.0,
    zeta2: int = 100,
    viral_size: float = 300.0,
    non_viral_size: float = 20.0,
    params: Optional[DistParams] = None,
) -> SynthSpec:
    """Two classes sharing one distribution and differing only in amplitude."""
    fam = DistFamily.parse(family)
    if params is None:
        params = {
            DistFamily.EXPONENTIAL: DistParams(lam=0.1),
            DistFamily.RAYLEIGH: DistParams(alpha=0.01),
            DistFamily.WEIBULL: DistParams(kappa=0.8, lam=10.0),
        }[fam]
    total = float(cumulative_hazard(fam, params, horizon))
    return SynthSpec(
        fam.value,
        ClassSpec(params, (viral_size - 1.0) / total, n_per_class),
        ClassSpec(params, (non_viral_size - 1.0) / total, n_per_class),
        horizon=horizon,
        zeta2=zeta2,
        seed=seed,
    )
