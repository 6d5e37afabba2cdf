"""Classification metrics, observation-window sweeps and report files."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from .core import Cascade, ViralityConfig
from .delta import DeltaConfig, LinearBaseline, Prediction, predict_counts, train_delta
from .errors import ConfigurationError, DomainError
from .gamma import GammaConfig, infer_survival_batch, train_gamma
from .ingest import VIRAL_RATIOS, SplitSpec, build_dataset, calibrate_thresholds, load_dataset
from .survdist import DistFamily
from .synth import SynthSpec, gen_dataset

log = logging.getLogger(__name__)

CSV_COLUMNS = ("dataset", "family", "window_hours", "class", "precision", "recall", "f1", "accuracy", "seed")
REPORT_FORMAT = "vedsa-report"


def _pct(num: float, den: float) -> float:
    return 100.0 * num / den if den else 0.0


def _f1(p: float, r: float) -> float:
    return 2.0 * p * r / (p + r) if p + r else 0.0


@dataclass(frozen=True)
class EvalReport:
    """Confusion counts with viral as the positive class, and derived percentages."""

    tp: int
    fp: int
    tn: int
    fn: int
    dataset: str = ""
    family: str = ""
    window_hours: float = 0.0
    seed: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def accuracy(self) -> float:
        return _pct(self.tp + self.tn, self.total)

    @property
    def viral_precision(self) -> float:
        return _pct(self.tp, self.tp + self.fp)

    @property
    def viral_recall(self) -> float:
        return _pct(self.tp, self.tp + self.fn)

    @property
    def viral_f1(self) -> float:
        return _f1(self.viral_precision, self.viral_recall)

    @property
    def non_viral_precision(self) -> float:
        return _pct(self.tn, self.tn + self.fn)

    @property
    def non_viral_recall(self) -> float:
        return _pct(self.tn, self.tn + self.fp)

    @property
    def non_viral_f1(self) -> float:
        return _f1(self.non_viral_precision, self.non_viral_recall)

    @property
    def macro_f1(self) -> float:
        return (self.viral_f1 + self.non_viral_f1) / 2.0

    def class_rows(self) -> list[dict[str, Any]]:
        base = {"dataset": self.dataset, "family": self.family, "window_hours": self.window_hours, "seed": self.seed}
        rows = []
        for cls, p, r, f in (
            ("non_viral", self.non_viral_precision, self.non_viral_recall, self.non_viral_f1),
            ("viral", self.viral_precision, self.viral_recall, self.viral_f1),
            (
                "macro",
                (self.non_viral_precision + self.viral_precision) / 2.0,
                (self.non_viral_recall + self.viral_recall) / 2.0,
                self.macro_f1,
            ),
        ):
            rows.append({**base, "class": cls, "precision": p, "recall": r, "f1": f, "accuracy": self.accuracy})
        return rows


def _labels_of(predictions) -> np.ndarray:
    if len(predictions) and isinstance(predictions[0], Prediction):
        return np.array([p.label for p in predictions], dtype=np.int64)
    return np.asarray(predictions, dtype=np.int64).reshape(-1)


def compute_metrics(predictions, labels, dataset: str = "", family: str = "", window_hours: float = 0.0, seed: int = 0) -> EvalReport:
    pred = _labels_of(predictions)
    true = np.asarray(labels, dtype=np.int64).reshape(-1)
    if pred.size == 0 or pred.size != true.size:
        raise DomainError("predictions and labels must be non-empty and aligned")
    if set(np.unique(true).tolist()) != {0, 1}:
        raise DomainError("metrics are undefined unless both classes occur in the labels")
    if not set(np.unique(pred).tolist()) <= {0, 1}:
        raise DomainError("predicted labels must be 0 or 1")
    tp = int(np.sum((pred == 1) & (true == 1)))
    fp = int(np.sum((pred == 1) & (true == 0)))
    tn = int(np.sum((pred == 0) & (true == 0)))
    fn = int(np.sum((pred == 0) & (true == 1)))
    return EvalReport(tp, fp, tn, fn, dataset, family, float(window_hours), seed)


@dataclass
class RunConfig:
    """Declarative experiment description; ``to_dict``/``from_dict`` round-trip exactly."""

    dataset: str = "synthetic"
    data_path: Optional[str] = None
    zeta1: Optional[int] = None
    zeta2: Optional[int] = None
    max_len: int = 24
    bin_length: float = 1.0
    windows: list = field(default_factory=lambda: [2, 6, 10, 14, 18, 24])
    families: list = field(default_factory=lambda: ["weibull", "exponential", "rayleigh"])
    baselines: list = field(default_factory=list)
    gamma: dict = field(default_factory=dict)
    delta: dict = field(default_factory=dict)
    split: dict = field(default_factory=dict)
    synth: Optional[dict] = None
    sample: Optional[int] = None
    seed: int = 0
    output_dir: str = "runs"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_dict(json.load(fh))
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: {exc}") from None

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    def gamma_config(self, family: str) -> GammaConfig:
        kw = {"seed": self.seed, **self.gamma, "family": family, "horizon": self.max_len, "bin_length": self.bin_length}
        return GammaConfig(**kw)

    def delta_config(self) -> DeltaConfig:
        kw = {"seed": self.seed, **self.delta, "horizon": self.max_len, "bin_length": self.bin_length}
        return DeltaConfig(**kw)

    def split_spec(self) -> SplitSpec:
        return SplitSpec(**{"seed": self.seed, **self.split})


def load_cascades(run: RunConfig) -> list[Cascade]:
    if run.dataset == "synthetic" and run.data_path is None:
        if run.synth is None:
            raise ConfigurationError("synthetic runs need a 'synth' spec or a data_path")
        return gen_dataset(SynthSpec.from_dict(run.synth)).raw
    if run.data_path is None:
        raise ConfigurationError(f"dataset {run.dataset!r} needs data_path")
    extra = {"sample": run.sample, "seed": run.seed} if run.dataset == "weibo" else {}
    return load_dataset(run.dataset, run.data_path, **extra)


def virality_config(run: RunConfig, cascades: Sequence[Cascade]) -> ViralityConfig:
    if run.zeta2 is None:
        if run.dataset == "synthetic" and run.synth is not None:
            z2 = int(run.synth["zeta2"])
            return ViralityConfig(z2, z2, run.max_len)
        if run.dataset not in VIRAL_RATIOS:
            raise ConfigurationError(f"no default thresholds for dataset {run.dataset!r}; set zeta1/zeta2")
        z1, z2 = calibrate_thresholds(cascades, VIRAL_RATIOS[run.dataset])
        log.info("calibrated thresholds zeta1=%d zeta2=%d", z1, z2)
        return ViralityConfig(z1, z2, run.max_len)
    z1 = run.zeta1 if run.zeta1 is not None else max(run.zeta2 // 2, 1)
    return ViralityConfig(z1, run.zeta2, run.max_len)


def window_bins(run: RunConfig, window: float) -> int:
    r = window / run.bin_length
    if abs(r - round(r)) > 1e-9 or round(r) < 1:
        raise ConfigurationError(f"window {window}h is not a positive multiple of the {run.bin_length}h bin")
    if round(r) > run.max_len:
        raise ConfigurationError(f"window {window}h exceeds the {run.max_len}-bin horizon")
    return int(round(r))


def _arrays(items):
    counts = np.stack([lc.binned.counts for lc in items]).astype(np.float64)
    labels = np.array([lc.v for lc in items], dtype=np.int64)
    return counts, labels


def window_sweep(run: RunConfig, cascades: Optional[Sequence[Cascade]] = None) -> list[EvalReport]:
    """Evaluate every (family, window) cell: one gamma per family, one delta per window."""
    bins = [window_bins(run, w) for w in run.windows]
    for fam in run.families:
        DistFamily.parse(fam)
    cascades = load_cascades(run) if cascades is None else cascades
    cfg = virality_config(run, cascades)
    split = run.split_spec()
    data = build_dataset(cascades, cfg, split, run.bin_length)
    if not data.test:
        raise ConfigurationError("test split is empty")
    train_counts, train_y = _arrays(data.train)
    test_counts, test_y = _arrays(data.test)
    delta_cfg = run.delta_config()
    if split.balance == "class_weight":
        delta_cfg = dataclasses.replace(delta_cfg, class_weight=True)
    reports = []
    for fam in run.families:
        gamma = train_gamma(data.train, run.gamma_config(fam)).model
        for window, r in zip(run.windows, bins):
            curves, _ = infer_survival_batch(gamma, train_counts[:, :r], run.max_len)
            delta = train_delta(curves, train_y, delta_cfg).model
            p = predict_counts(gamma, delta, test_counts[:, :r])
            reports.append(compute_metrics((p >= delta_cfg.threshold).astype(int), test_y, run.dataset, fam, window, run.seed))
            log.info("%s %s %sh accuracy %.2f", run.dataset, fam, window, reports[-1].accuracy)
    if "linear" in run.baselines:
        for window, r in zip(run.windows, bins):
            base = LinearBaseline().fit(train_counts[:, :r], train_y)
            p = base.predict_proba(test_counts[:, :r])
            reports.append(compute_metrics((p >= base.threshold).astype(int), test_y, run.dataset, "linear", window, run.seed))
    return reports


def _fmt(value) -> str:
    return f"{value:.2f}" if isinstance(value, float) else str(value)


def _window_text(w: float) -> str:
    return str(int(w)) if float(w).is_integer() else repr(float(w))


def emit_report(reports: Sequence[EvalReport], path, format: str = "csv") -> Path:
    """Write reports with a fixed column order; percentages to two decimals."""
    path = Path(path)
    if format == "csv":
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for rep in reports:
                for row in rep.class_rows():
                    row["window_hours"] = _window_text(row["window_hours"])
                    writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    elif format == "json":
        rows = []
        for rep in reports:
            for metric in (
                "accuracy", "viral_precision", "viral_recall", "viral_f1",
                "non_viral_precision", "non_viral_recall", "non_viral_f1", "macro_f1",
            ):
                rows.append({
                    "dataset": rep.dataset, "family": rep.family, "window_hours": rep.window_hours,
                    "metric": metric, "value": round(getattr(rep, metric), 2),
                })
        doc = {"format": REPORT_FORMAT, "version": 1, "rows": rows}
        path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    else:
        raise ConfigurationError(f"unknown report format {format!r}")
    return path


def read_report_csv(path) -> list[dict[str, Any]]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            for key in ("precision", "recall", "f1", "accuracy", "window_hours"):
                row[key] = float(row[key])
            row["seed"] = int(row["seed"])
            out.append(row)
    return out
