"""Cascade types, binning, censoring and virality labelling.

Times are in hours with the origin at the first (source) event.  Bins are
half-open intervals ``[j*L, (j+1)*L)`` so binning partitions the time axis.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Cascade:
    """One piece of information and the times it was (re)shared."""

    id: str
    events: np.ndarray

    def __post_init__(self):
        events = _frozen_array(self.events, np.float64).reshape(-1)
        object.__setattr__(self, "events", events)
        if events.size == 0:
            raise DomainError(f"cascade {self.id!r} has no events")
        if events[0] != 0.0:
            raise DomainError(f"cascade {self.id!r} is not origin-shifted (first event {events[0]})")
        if events.size > 1 and np.any(np.diff(events) < 0):
            raise DomainError(f"cascade {self.id!r} events are not sorted")
        if not np.all(np.isfinite(events)):
            raise DomainError(f"cascade {self.id!r} has non-finite event times")

    @classmethod
    def from_times(cls, id, times: Sequence[float]) -> "Cascade":
        """Build a cascade from raw timestamps: sort, then shift so the first is 0."""
        t = np.sort(np.asarray(times, dtype=np.float64).reshape(-1))
        if t.size == 0:
            raise DomainError(f"cascade {id!r} has no events")
        return cls(str(id), t - t[0])

    @property
    def n(self) -> int:
        return int(self.events.size)

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other) -> bool:
        if not isinstance(other, Cascade):
            return NotImplemented
        return self.id == other.id and np.array_equal(self.events, other.events)

    def __hash__(self) -> int:
        return hash((self.id, self.n))

    def __repr__(self) -> str:
        return f"Cascade(id={self.id!r}, n={self.n})"


@dataclass(frozen=True, eq=False)
class BinnedCascade:
    counts: np.ndarray
    bin_length: float
    observed_bins: int

    def __post_init__(self):
        counts = _frozen_array(self.counts, np.int64).reshape(-1)
        object.__setattr__(self, "counts", counts)
        if counts.size != self.observed_bins:
            raise DomainError(f"{counts.size} counts for {self.observed_bins} bins")
        if np.any(counts < 0):
            raise DomainError("bin counts must be nonnegative")

    def prefix(self, bins: int) -> "BinnedCascade":
        """Counts of the first ``bins`` bins; identical to binning the censored cascade."""
        if not 0 <= bins <= self.observed_bins:
            raise DomainError(f"cannot take {bins} of {self.observed_bins} bins")
        return BinnedCascade(self.counts[:bins], self.bin_length, bins)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinnedCascade):
            return NotImplemented
        return (
            self.bin_length == other.bin_length
            and self.observed_bins == other.observed_bins
            and np.array_equal(self.counts, other.counts)
        )

    __hash__ = None


class Label(enum.IntEnum):
    NON_VIRAL = 0
    VIRAL = 1
    INTERMEDIATE = 2


@dataclass(frozen=True)
class ViralityConfig:
    """Event-count thresholds.

    ``zeta1`` is the largest non-viral size, ``zeta2`` the smallest viral size.
    ``max_len`` is the model horizon in bins (padding/truncation length), not
    the bin length.
    """

    zeta1: int
    zeta2: int
    max_len: int = 24

    def __post_init__(self):
        if not (0 < self.zeta1 <= self.zeta2):
            raise ConfigurationError(f"need 0 < zeta1 <= zeta2, got {self.zeta1}, {self.zeta2}")
        if self.max_len < 1:
            raise ConfigurationError(f"max_len must be >= 1, got {self.max_len}")


@dataclass(frozen=True, eq=False)
class LabeledCascade:
    binned: BinnedCascade
    label: Label
    sigma: np.ndarray
    viral_time: Optional[int]
    id: str = ""
    cascade: Optional[Cascade] = None
    truth: Optional[dict[str, Any]] = field(default=None)

    def __post_init__(self):
        sigma = _frozen_array(self.sigma, np.int8).reshape(-1)
        object.__setattr__(self, "sigma", sigma)
        if self.label not in (Label.VIRAL, Label.NON_VIRAL):
            raise DomainError("labeled cascades are viral or non-viral")
        if sigma.size and np.any(np.diff(sigma) < 0):
            raise DomainError("sigma must be nondecreasing")
        if (self.viral_time is not None) != (self.label == Label.VIRAL):
            raise DomainError("viral_time is present exactly for viral cascades")

    @property
    def v(self) -> int:
        return int(self.label)


def _num_bins(bin_length: float, span: float) -> int:
    if not (bin_length > 0 and math.isfinite(bin_length)):
        raise ConfigurationError(f"bin_length must be positive, got {bin_length}")
    if not (span > 0 and math.isfinite(span)):
        raise ConfigurationError(f"span must be positive, got {span}")
    k = round(span / bin_length)
    if k < 1 or abs(k * bin_length - span) > 1e-9 * span:
        raise ConfigurationError(f"span {span} is not a multiple of bin_length {bin_length}")
    return int(k)


def bin_edges(bin_length: float, num_bins: int) -> np.ndarray:
    return np.arange(num_bins + 1, dtype=np.float64) * bin_length


def bin_cascade(c: Cascade, bin_length: float, span: float) -> BinnedCascade:
    """Count events per bin over ``[0, span)``."""
    k = _num_bins(bin_length, span)
    below = np.searchsorted(c.events, bin_edges(bin_length, k), side="left")
    return BinnedCascade(np.diff(below), float(bin_length), k)


def label_cascade(c: Cascade, cfg: ViralityConfig) -> Label:
    if c.n <= cfg.zeta1:
        return Label.NON_VIRAL
    if c.n >= cfg.zeta2:
        return Label.VIRAL
    return Label.INTERMEDIATE


def bin_index(t: float, bin_length: float) -> int:
    """Index j of the bin ``[j*L, (j+1)*L)`` holding ``t``, consistent with ``bin_edges``."""
    j = int(math.floor(t / bin_length))
    while (j + 1) * bin_length <= t:
        j += 1
    while j > 0 and j * bin_length > t:
        j -= 1
    return j


def viral_state_sequence(
    c: Cascade, cfg: ViralityConfig, bin_length: float, num_bins: int
) -> tuple[np.ndarray, Optional[int]]:
    """Per-bin viral-state indicator and the bin where the cascade turns viral.

    The viral bin is the first whose cumulative count reaches ``zeta2``.  It is
    computed over the whole cascade, so it may lie beyond ``num_bins`` (then
    every in-window indicator is 0 while the cascade is still viral).
    """
    label = label_cascade(c, cfg)
    if label == Label.INTERMEDIATE:
        raise DomainError(f"cascade {c.id!r} (n={c.n}) is intermediate")
    sigma = np.zeros(num_bins, dtype=np.int8)
    if label == Label.NON_VIRAL:
        return sigma, None
    t_v = bin_index(float(c.events[cfg.zeta2 - 1]), bin_length)
    sigma[t_v:] = 1
    return sigma, t_v


def censor(c: Cascade, tau: float) -> Cascade:
    """Keep only events strictly before ``tau``."""
    if not tau > 0:
        raise DomainError(f"censoring time must be positive, got {tau}")
    keep = int(np.searchsorted(c.events, tau, side="left"))
    if keep == c.n:
        return c
    return Cascade(c.id, c.events[:keep])


def label_and_bin(c: Cascade, cfg: ViralityConfig, bin_length: float) -> Optional[LabeledCascade]:
    """Label, bin to ``cfg.max_len`` bins and attach sigma; ``None`` for intermediates."""
    label = label_cascade(c, cfg)
    if label == Label.INTERMEDIATE:
        return None
    binned = bin_cascade(c, bin_length, cfg.max_len * bin_length)
    sigma, t_v = viral_state_sequence(c, cfg, bin_length, cfg.max_len)
    return LabeledCascade(binned, label, sigma, t_v, id=c.id, cascade=c)
