"""Command-line entry point: ``vedsa <subcommand> --config run.json [overrides]``.

Exit codes: 0 success, 2 usage, 3 configuration or domain error, 4 input
parse/schema/IO error, 5 numeric health failure, 6 gradient check failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .delta import DeltaModel, predict_pipeline, train_delta, write_predictions
from .errors import ConfigurationError, VedsaError
from .evaluation import (
    RunConfig,
    compute_metrics,
    emit_report,
    load_cascades,
    virality_config,
    window_bins,
    window_sweep,
)
from .gamma import GammaModel, infer_survival_batch, train_gamma
from .gradchecks import CHECKS, run_gradchecks
from .ingest import DATASETS, build_dataset, load_dataset, manifest, write_canonical
from .synth import SynthSpec, gen_dataset, separable_spec, write_truth

log = logging.getLogger("vedsa")

EXIT_USAGE = 2
EXIT_IO = 4
EXIT_GRADCHECK = 6


def _coerce(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(run: RunConfig, pairs: Sequence[str]) -> RunConfig:
    """Apply ``key=value`` pairs; dotted keys reach into the gamma/delta/split/synth dicts."""
    d = run.to_dict()
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key:
            raise ConfigurationError(f"override {pair!r} is not key=value")
        parts = key.split(".")
        node = d
        for part in parts[:-1]:
            if node.get(part) is None:
                node[part] = {}
            if not isinstance(node[part], dict):
                raise ConfigurationError(f"{part!r} in {key!r} is not a section")
            node = node[part]
        node[parts[-1]] = _coerce(value)
    return RunConfig.from_dict(d)


def _run_config(args) -> RunConfig:
    run = RunConfig.load(args.config) if args.config else RunConfig()
    run = apply_overrides(run, args.set or [])
    if args.seed is not None:
        run = apply_overrides(run, [f"seed={args.seed}"])
    return run


def _out(args, run: RunConfig, default: str) -> Path:
    path = Path(args.output) if args.output else Path(run.output_dir) / default
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _split(run: RunConfig):
    cascades = load_cascades(run)
    return build_dataset(cascades, virality_config(run, cascades), run.split_spec(), run.bin_length)


def _family(args, run: RunConfig) -> str:
    return args.family or run.families[0]


def _window(args, run: RunConfig) -> float:
    return float(args.window) if args.window is not None else float(run.windows[-1])


def cmd_ingest(args, run: RunConfig) -> int:
    name = args.dataset or run.dataset
    path = args.input or run.data_path
    if path is None:
        raise ConfigurationError("ingest needs --input or data_path")
    extra = {"sample": run.sample, "seed": run.seed} if name == "weibo" else {}
    cascades = load_dataset(name, path, on_error=args.on_error, **extra)
    out = write_canonical(cascades, _out(args, run, f"{name}.jsonl"))
    print(json.dumps(dict(dataclasses.asdict(manifest(name, path, cascades)), output=str(out))))
    return 0


def cmd_synth(args, run: RunConfig) -> int:
    if run.synth is not None:
        spec = SynthSpec.from_dict(run.synth)
    else:
        spec = separable_spec(_family(args, run), seed=run.seed, horizon=run.max_len * run.bin_length)
    data = gen_dataset(spec)
    out = write_canonical(data.raw, _out(args, run, "synthetic.jsonl"))
    truth = write_truth(data, out.with_suffix(".truth.jsonl"))
    print(json.dumps({"cascades": len(data.cascades), "resampled": data.resampled, "output": str(out), "truth": str(truth)}))
    return 0


def cmd_train_gamma(args, run: RunConfig) -> int:
    family = _family(args, run)
    data = _split(run)
    res = train_gamma(data.train, run.gamma_config(family), checkpoint=_out(args, run, f"gamma-{family}.npz"))
    print(json.dumps({"family": family, "final_loss": res.loss_trace[-1] if res.loss_trace else None, "output": str(res.checkpoint)}))
    return 0


def _need(path: Optional[str], what: str) -> str:
    if not path:
        raise ConfigurationError(f"--{what} checkpoint is required")
    return path


def cmd_train_delta(args, run: RunConfig) -> int:
    gamma = GammaModel.load(_need(args.gamma, "gamma"))
    window = _window(args, run)
    r = window_bins(run, window)
    data = _split(run)
    counts = np.stack([lc.binned.counts[:r] for lc in data.train])
    labels = np.array([lc.v for lc in data.train])
    curves, _ = infer_survival_batch(gamma, counts, run.max_len)
    res = train_delta(curves, labels, run.delta_config())
    out = res.model.save(_out(args, run, f"delta-{gamma.family.value}-{window:g}h.npz"))
    print(json.dumps({"window_hours": window, "final_loss": res.loss_trace[-1] if res.loss_trace else None, "output": str(out)}))
    return 0


def cmd_predict(args, run: RunConfig) -> int:
    gamma = GammaModel.load(_need(args.gamma, "gamma"))
    delta = DeltaModel.load(_need(args.delta, "delta"))
    cascades = load_dataset("canonical", args.input) if args.input else load_cascades(run)
    window = _window(args, run)
    preds = [predict_pipeline(gamma, delta, c, window) for c in cascades]
    out = write_predictions(preds, _out(args, run, "predictions.jsonl"))
    print(json.dumps({"predictions": len(preds), "viral": sum(p.label for p in preds), "output": str(out)}))
    return 0


def cmd_eval(args, run: RunConfig) -> int:
    gamma = GammaModel.load(_need(args.gamma, "gamma"))
    delta = DeltaModel.load(_need(args.delta, "delta"))
    window = _window(args, run)
    r = window_bins(run, window)
    data = _split(run)
    counts = np.stack([lc.binned.counts[:r] for lc in data.test])
    labels = np.array([lc.v for lc in data.test])
    curves, _ = infer_survival_batch(gamma, counts, delta.cfg.horizon)
    pred = (delta.predict_proba(curves) >= delta.cfg.threshold).astype(int)
    rep = compute_metrics(pred, labels, run.dataset, gamma.family.value, window, run.seed)
    out = emit_report([rep], _out(args, run, "eval.csv"), args.format)
    print(json.dumps({"accuracy": round(rep.accuracy, 2), "output": str(out)}))
    return 0


def cmd_sweep(args, run: RunConfig) -> int:
    reports = window_sweep(run)
    ext = "csv" if args.format == "csv" else "json"
    out = emit_report(reports, _out(args, run, f"sweep.{ext}"), args.format)
    for rep in reports:
        print(f"{rep.family:12s} {rep.window_hours:>6g}h  accuracy {rep.accuracy:6.2f}  viral F1 {rep.viral_f1:6.2f}")
    print(f"report: {out}")
    return 0


def cmd_gradcheck(args, run: RunConfig) -> int:
    names = args.only or None
    if names:
        unknown = set(names) - set(CHECKS)
        if unknown:
            raise ConfigurationError(f"unknown checks {sorted(unknown)}; choose from {sorted(CHECKS)}")
    results = run_gradchecks(run.seed, repeats=args.repeats, names=names)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name:14s} max rel err {r.max_error:.3e} (tol {r.tolerance:g})")
    return 0 if all(r.passed for r in results) else EXIT_GRADCHECK


COMMANDS = {
    "ingest": cmd_ingest,
    "synth": cmd_synth,
    "train-gamma": cmd_train_gamma,
    "train-delta": cmd_train_delta,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "gradcheck": cmd_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config entry (repeatable)")
    common.add_argument("--seed", type=int, help="override the run seed")
    common.add_argument("-o", "--output", help="output file (default: under output_dir)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="vedsa", description="Viral cascade detection via deep survival analysis.")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("ingest", parents=[common], help="convert a raw dataset to the canonical format")
    p.add_argument("--dataset", choices=DATASETS)
    p.add_argument("--input", help="dataset file or directory")
    p.add_argument("--on-error", choices=("raise", "skip"), default="raise")

    p = sub.add_parser("synth", parents=[common], help="generate oracle cascades and ground truth")
    p.add_argument("--family")

    p = sub.add_parser("train-gamma", parents=[common], help="fit the survival model for one family")
    p.add_argument("--family")

    for name, text in (("train-delta", "fit the curve classifier at one window"),
                       ("predict", "label cascades from their first window hours"),
                       ("eval", "score a trained pipeline on the test split")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--gamma", help="gamma checkpoint")
        if name != "train-delta":
            p.add_argument("--delta", help="delta checkpoint")
        p.add_argument("--window", type=float, help="observation window in hours")
        if name == "predict":
            p.add_argument("--input", help="canonical cascade file (default: the configured dataset)")
        if name == "eval":
            p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("sweep", parents=[common], help="family x window evaluation grid")
    p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("gradcheck", parents=[common], help="compare backprop with finite differences")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--only", nargs="+", metavar="NAME")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args, _run_config(args))
    except VedsaError as exc:
        print(f"vedsa: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"vedsa: io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
