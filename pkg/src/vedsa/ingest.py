"""Dataset parsers, the canonical cascade file format, and train/test assembly.

Supported layouts
-----------------
twitter
    The SNAP seismic release: ``index.csv`` (``tweet_id, post_time_day,
    start_ind, end_ind``; 1-based inclusive row range) and ``data.csv``
    (``relative_time_second, number_of_followers``).  Follower counts are
    skipped.  Reshares later than 168 hours are dropped.
digg
    Vote rows ``vote_date, voter_id, story_id`` (epoch seconds), comma
    separated, optionally quoted, in any order.
weibo
    Repost-chain blocks: a header line ``mid  time  uid  k`` followed by ``k``
    lines ``uid  time``.  Times are epoch seconds or ``YYYY-MM-DD[ -]HH:MM:SS``.
canonical
    JSON lines; the first line is a version header, then one
    ``{"id": ..., "events": [...]}`` object per cascade (hours).
"""

from __future__ import annotations

import csv
import json
import logging
from collections import defaultdict
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .core import Cascade, Label, LabeledCascade, ViralityConfig, label_and_bin
from .errors import ConfigurationError, ParseError, SchemaError

log = logging.getLogger(__name__)

TWITTER_CAP_HOURS = 168.0
CANONICAL_FORMAT = "vedsa-cascades"
CANONICAL_VERSION = 1

#: Share of viral cascades among labelled cascades used to calibrate thresholds.
VIRAL_RATIOS = {"twitter": 0.0833, "digg": 0.0194, "weibo": 0.00972}

DATASETS = ("twitter", "digg", "weibo", "canonical", "synthetic")


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    path: str
    cascade_count: int
    reshare_count: int

    def __post_init__(self):
        if self.name not in DATASETS:
            raise ConfigurationError(f"unknown dataset {self.name!r}")
        if self.cascade_count < 1 or self.reshare_count < self.cascade_count:
            raise ConfigurationError("manifest needs >= 1 cascade and at least one event per cascade")


def manifest(name: str, path, cascades: Sequence[Cascade]) -> DatasetManifest:
    return DatasetManifest(name, str(path), len(cascades), int(sum(c.n for c in cascades)))


class _Errors:
    """Raise on the first bad record, or count and skip them."""

    def __init__(self, path, on_error: str):
        if on_error not in ("raise", "skip"):
            raise ConfigurationError(f"on_error must be 'raise' or 'skip', got {on_error!r}")
        self.path, self.on_error, self.skipped = str(path), on_error, 0

    def __call__(self, message: str, line: int):
        if self.on_error == "raise":
            raise ParseError(message, line, self.path)
        self.skipped += 1
        log.warning("%s:%d: skipped: %s", self.path, line, message)


def _require(path) -> Path:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{path} does not exist")
    return path


def _is_header(fields: Sequence[str]) -> bool:
    try:
        float(fields[0])
        return False
    except (ValueError, IndexError):
        return True


def parse_twitter(path, on_error: str = "raise", cap_hours: float = TWITTER_CAP_HOURS) -> Iterator[Cascade]:
    """Cascades from a seismic directory (or its ``index.csv``)."""
    path = _require(path)
    index_path = path / "index.csv" if path.is_dir() else path
    data_path = index_path.with_name("data.csv")
    _require(index_path), _require(data_path)
    errors = _Errors(index_path, on_error)
    times = _twitter_times(data_path, on_error)
    with open(index_path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (lineno == 1 and _is_header(row)):
                continue
            try:
                tweet_id = row[0].strip()
                start, end = int(row[2]), int(row[3])
            except (IndexError, ValueError):
                errors(f"malformed index record {row!r}", lineno)
                continue
            if not (1 <= start <= end <= times.size):
                errors(f"row range {start}..{end} outside data.csv ({times.size} rows)", lineno)
                continue
            t = times[start - 1 : end]
            if np.any(np.isnan(t)):
                errors(f"tweet {tweet_id} references unparseable data rows", lineno)
                continue
            t = np.sort(t)
            hours = (t - t[0]) / 3600.0
            yield Cascade(tweet_id, hours[hours <= cap_hours])


def _twitter_times(data_path: Path, on_error: str) -> np.ndarray:
    errors = _Errors(data_path, on_error)
    values = []
    with open(data_path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if lineno == 1 and _is_header(row):
                continue
            try:
                values.append(float(row[0]))
            except (IndexError, ValueError):
                errors(f"malformed data row {row!r}", lineno)
                values.append(np.nan)
    return np.asarray(values, dtype=np.float64)


def _hours_since_first(stamps) -> np.ndarray:
    # subtract in seconds first: epoch values lose bits when divided
    s = np.asarray(stamps, dtype=np.float64)
    return (s - s.min()) / 3600.0


def _story_key(story: str):
    return (0, int(story), "") if story.lstrip("-").isdigit() else (1, 0, story)


def parse_digg(path, on_error: str = "raise") -> Iterator[Cascade]:
    """One cascade per story, in story-id order regardless of row order."""
    path = _require(path)
    errors = _Errors(path, on_error)
    votes: dict[str, list[float]] = defaultdict(list)
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip():
                continue
            if lineno == 1 and _is_header(row):
                continue
            try:
                stamp, story = float(row[0]), row[2].strip()
            except (IndexError, ValueError):
                errors(f"malformed vote row {row!r}", lineno)
                continue
            if not story:
                errors("empty story id", lineno)
                continue
            votes[story].append(stamp)
    for story in sorted(votes, key=_story_key):
        yield Cascade.from_times(story, _hours_since_first(votes[story]))


def _weibo_time(text: str) -> float:
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        pass
    for fmt in ("%Y-%m-%d-%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S"):
        try:
            return datetime.strptime(text, fmt).replace(tzinfo=timezone.utc).timestamp()
        except ValueError:
            continue
    raise ValueError(f"unrecognised time {text!r}")


def _split_weibo(line: str) -> list[str]:
    # a "YYYY-MM-DD HH:MM:SS" time contains one space; rejoin it
    parts = line.split("\t") if "\t" in line else line.split()
    out: list[str] = []
    for p in parts:
        p = p.strip()
        if out and len(p) == 8 and p.count(":") == 2 and len(out[-1]) == 10 and out[-1].count("-") == 2:
            out[-1] = f"{out[-1]} {p}"
        elif p:
            out.append(p)
    return out


def parse_weibo(
    path, on_error: str = "raise", sample: Optional[int] = None, seed: int = 0
) -> Iterator[Cascade]:
    """Cascades from repost-chain blocks, optionally a seeded uniform sample of them."""
    path = _require(path)
    errors = _Errors(path, on_error)
    cascades: list[Cascade] = []
    with open(path, encoding="utf-8") as fh:
        lines = iter(enumerate(fh, start=1))
        for lineno, line in lines:
            fields = _split_weibo(line)
            if not fields:
                continue
            try:
                mid, t0, k = fields[0], _weibo_time(fields[1]), int(fields[3])
            except (IndexError, ValueError):
                errors(f"malformed cascade header {line.strip()!r}", lineno)
                continue
            stamps = [t0]
            ok = True
            for _ in range(k):
                try:
                    sub_no, sub = next(lines)
                except StopIteration:
                    errors(f"post {mid}: expected {k} reposts, file ended", lineno)
                    ok = False
                    break
                sub_fields = _split_weibo(sub)
                try:
                    stamps.append(_weibo_time(sub_fields[1]))
                except (IndexError, ValueError):
                    errors(f"malformed repost line {sub.strip()!r}", sub_no)
                    ok = False
            if ok:
                cascades.append(Cascade.from_times(mid, _hours_since_first(stamps)))
    if sample is not None and sample < len(cascades):
        keep = np.sort(np.random.default_rng(seed).choice(len(cascades), sample, replace=False))
        cascades = [cascades[i] for i in keep]
    yield from cascades


def write_canonical(cascades: Iterable[Cascade], path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps({"format": CANONICAL_FORMAT, "version": CANONICAL_VERSION}) + "\n")
        for c in cascades:
            fh.write(json.dumps({"id": c.id, "events": c.events.tolist()}) + "\n")
    return path


def read_canonical(path) -> Iterator[Cascade]:
    path = _require(path)
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        try:
            header = json.loads(first)
        except json.JSONDecodeError:
            raise SchemaError(f"{path}: missing canonical header") from None
        if header.get("format") != CANONICAL_FORMAT:
            raise SchemaError(f"{path}: not a canonical cascade file")
        if header.get("version") != CANONICAL_VERSION:
            raise SchemaError(f"{path}: version {header.get('version')} != {CANONICAL_VERSION}")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                yield Cascade(str(rec["id"]), rec["events"])
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ParseError(f"bad record: {exc}", lineno, str(path)) from None


def load_dataset(name: str, path, on_error: str = "raise", **kwargs) -> list[Cascade]:
    parsers = {"twitter": parse_twitter, "digg": parse_digg, "weibo": parse_weibo}
    if name in ("canonical", "synthetic"):
        return list(read_canonical(path))
    if name not in parsers:
        raise ConfigurationError(f"unknown dataset {name!r}")
    return list(parsers[name](path, on_error=on_error, **kwargs))


@dataclass(frozen=True)
class SplitSpec:
    seed: int = 0
    train_fraction: float = 0.8
    balance: str = "undersample"
    balance_test: bool = False

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigurationError(f"train_fraction must be in (0, 1), got {self.train_fraction}")
        if self.balance not in ("none", "undersample", "class_weight"):
            raise ConfigurationError(f"unknown balance mode {self.balance!r}")


def calibrate_thresholds(cascades: Sequence[Cascade], target_ratio: float) -> tuple[int, int]:
    """Smallest viral size whose viral share among labelled cascades is at most ``target_ratio``.

    The non-viral bound is half of it, rounded down.
    """
    sizes = np.sort(np.array([c.n for c in cascades]))
    if sizes.size == 0:
        raise ConfigurationError("no cascades to calibrate on")
    for z2 in np.unique(sizes):
        z2 = int(z2)
        z1 = max(z2 // 2, 1)
        if z2 < 2:
            continue
        viral = sizes.size - np.searchsorted(sizes, z2, side="left")
        non_viral = np.searchsorted(sizes, z1, side="right")
        if viral and non_viral and viral / (viral + non_viral) <= target_ratio:
            return z1, z2
    raise ConfigurationError(f"no threshold reaches a viral ratio of {target_ratio}")


@dataclass
class DatasetSplit:
    train: list[LabeledCascade]
    test: list[LabeledCascade]
    viral_ratio: float
    excluded: int


def _undersample(items: list[LabeledCascade], rng: np.random.Generator) -> list[LabeledCascade]:
    viral = [i for i, lc in enumerate(items) if lc.label == Label.VIRAL]
    other = [i for i, lc in enumerate(items) if lc.label != Label.VIRAL]
    small, big = sorted((viral, other), key=len)
    keep = set(small) | set(rng.choice(big, size=len(small), replace=False).tolist())
    return [lc for i, lc in enumerate(items) if i in keep]


def build_dataset(
    cascades: Sequence[Cascade],
    cfg: ViralityConfig,
    split: SplitSpec,
    bin_length: float = 1.0,
    window: Optional[float] = None,
) -> DatasetSplit:
    """Drop intermediates, label and bin the rest, and split by class with a seeded shuffle.

    Every labelled cascade keeps ``cfg.max_len`` bins; an observation window
    is applied later by taking a prefix, so ``window`` is only validated here.
    """
    if window is not None and window > cfg.max_len * bin_length + 1e-9:
        raise ConfigurationError(f"window {window}h exceeds the {cfg.max_len * bin_length}h horizon")
    labeled = [label_and_bin(c, cfg, bin_length) for c in cascades]
    kept = [lc for lc in labeled if lc is not None]
    by_class = {lab: [lc for lc in kept if lc.label == lab] for lab in (Label.NON_VIRAL, Label.VIRAL)}
    for lab, items in by_class.items():
        if not items:
            raise ConfigurationError(f"no {lab.name.lower()} cascades left after thresholding")
    rng = np.random.default_rng(np.random.SeedSequence([split.seed, 7]))
    train, test = [], []
    for lab in (Label.NON_VIRAL, Label.VIRAL):
        items = by_class[lab]
        order = rng.permutation(len(items))
        cut = int(round(split.train_fraction * len(items)))
        cut = min(max(cut, 1), len(items) - 1) if len(items) > 1 else 1
        train += [items[i] for i in order[:cut]]
        test += [items[i] for i in order[cut:]]
    if split.balance == "undersample":
        train = _undersample(train, rng)
    if split.balance_test and test:
        test = _undersample(test, rng)
    ratio = len(by_class[Label.VIRAL]) / len(kept)
    log.info("kept %d of %d cascades, viral ratio %.4f", len(kept), len(cascades), ratio)
    return DatasetSplit(train, test, ratio, len(cascades) - len(kept))
