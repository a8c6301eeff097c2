"""Command-line entry point: ``spmc {train,grid,sweep,synth}``.

Every command writes a ``manifest.json`` next to its outputs recording the
resolved configuration, input digests, seed, output paths and wall-clock
duration. Re-running with the same manifest reproduces every other output
byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from typing import Optional, Sequence

from . import __version__
from .corpus import MIN_SEQUENCE, apply_threshold, load_corpus, split as make_split
from .errors import EmptySplitError, ParseError, TrainingDiverged
from .evaluation import auc
from .models import ModelKind, save_checkpoint
from .sweeps import (
    DEFAULT_ETAS,
    DEFAULT_LAMBDAS,
    MODELS,
    grid_search,
    sensitivity_sweep,
    threshold_sweep,
    write_grid_csv,
    write_sensitivity_csv,
    write_threshold_csv,
)
from .synth import SynthConfig, generate, write_dataset
from .training import TrainConfig, train

log = logging.getLogger("spmc")

METRICS_COLUMNS = ("epoch", "val_auc", "objective_estimate")
PRNG = "numpy.random.PCG64"


# -- argument types -----------------------------------------------------------


def _threshold(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer {text!r}") from None
    if n < MIN_SEQUENCE:
        raise argparse.ArgumentTypeError(f"threshold must be >= {MIN_SEQUENCE}, got {n}")
    return n


def _positive_int(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {n}")
    return n


def _model(text: str) -> ModelKind:
    try:
        return ModelKind.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _list_of(convert):
    def parse(text: str) -> list:
        parts = [p.strip() for p in text.split(",")]
        if not text.strip() or any(not p for p in parts):
            raise argparse.ArgumentTypeError(f"expected a nonempty comma-separated list, got {text!r}")
        try:
            return [convert(p) for p in parts]
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise argparse.ArgumentTypeError(f"bad list {text!r}: {exc}") from None

    return parse


# -- parser ---------------------------------------------------------------------


def _add_data(p):
    p.add_argument("--interactions", required=True, metavar="PATH",
                   help="whitespace-separated 'user item [rating] timestamp' lines")
    p.add_argument("--trust", metavar="PATH", help="'truster trustee [weight]' lines")
    p.add_argument("--threshold", type=_threshold, default=5, metavar="INT",
                   help="keep each user's most recent N interactions (N >= 4, default 5)")


def _add_model_flags(p, model=True):
    if model:
        p.add_argument("--model", type=_model, default=ModelKind.SPMC,
                       help="bprmf, fpmc, sbpr, gbpr or spmc (default spmc)")
    p.add_argument("--k", type=_positive_int, default=20, metavar="INT",
                   help="latent dimension (default 20)")
    p.add_argument("--alpha", type=float, default=1.0, help="friend-count exponent (default 1.0)")
    p.add_argument("--epochs", type=_positive_int, default=50, metavar="INT", help="default 50")
    p.add_argument("--seed", type=int, default=0, metavar="INT", help="default 0")
    p.add_argument("--unmerged", action="store_true",
                   help="separate last-item, friend and friend-item embeddings")
    p.add_argument("--threads", type=_positive_int, default=1, metavar="INT",
                   help="evaluation threads; results do not depend on it (default 1)")
    p.add_argument("--out", required=True, metavar="DIR", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spmc", description="Socially-aware personalized Markov chains and baselines."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="filter, split, train one model and report test AUC")
    _add_data(p)
    _add_model_flags(p)
    p.add_argument("--eta", type=float, default=0.05, help="learning rate (default 0.05)")
    p.add_argument("--lambda", dest="lam", type=float, default=0.01,
                   help="L2 regularization (default 0.01)")

    p = sub.add_parser("grid", help="grid-search eta and lambda by validation AUC")
    _add_data(p)
    _add_model_flags(p)
    p.add_argument("--eta-grid", type=_list_of(float), default=list(DEFAULT_ETAS),
                   metavar="LIST", help="comma list (default 0.5,0.05,0.005)")
    p.add_argument("--lambda-grid", type=_list_of(float), default=list(DEFAULT_LAMBDAS),
                   metavar="LIST", help="comma list (default 1,0.1,0.01,0.001)")

    p = sub.add_parser("sweep", help="threshold sweep over all models, or SPMC K/alpha sensitivity")
    _add_data(p)
    _add_model_flags(p, model=False)
    p.add_argument("--sweep", required=True, choices=("threshold", "k", "alpha"))
    p.add_argument("--values", required=True, metavar="LIST", help="comma list of values")
    p.add_argument("--models", type=_list_of(_model), default=list(MODELS), metavar="LIST",
                   help="threshold sweep only (default all five)")
    p.add_argument("--eta", type=float, default=0.05, help="k/alpha sweeps (default 0.05)")
    p.add_argument("--lambda", dest="lam", type=float, default=0.01,
                   help="k/alpha sweeps (default 0.01)")
    p.add_argument("--eta-grid", type=_list_of(float), default=list(DEFAULT_ETAS), metavar="LIST",
                   help="threshold sweep grid (default 0.5,0.05,0.005)")
    p.add_argument("--lambda-grid", type=_list_of(float), default=list(DEFAULT_LAMBDAS),
                   metavar="LIST", help="threshold sweep grid (default 1,0.1,0.01,0.001)")

    p = sub.add_parser("synth", help="write a synthetic corpus with planted structure")
    d = SynthConfig()
    p.add_argument("--num-users", type=_positive_int, default=d.num_users, metavar="INT")
    p.add_argument("--num-items", type=_positive_int, default=d.num_items, metavar="INT")
    p.add_argument("--num-clusters", type=_positive_int, default=d.num_clusters, metavar="INT")
    p.add_argument("--seq-len-mean", type=float, default=d.seq_len_mean)
    p.add_argument("--friends-per-user", type=int, default=d.friends_per_user, metavar="INT")
    p.add_argument("--mix", type=_list_of(float), default=list(d.mix), metavar="P,S,F",
                   help="preference, sequential and social weights summing to 1")
    p.add_argument("--noise", type=float, default=d.noise)
    p.add_argument("--start-spread", type=float, default=d.start_spread)
    p.add_argument("--seed", type=int, default=0, metavar="INT")
    p.add_argument("--out", required=True, metavar="DIR")
    return parser


# -- helpers ----------------------------------------------------------------------


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return "sha256:" + h.hexdigest()


def _inputs(args) -> dict:
    paths = {"interactions": args.interactions}
    if args.trust:
        paths["trust"] = args.trust
    return {k: {"path": v, "digest": file_digest(v)} for k, v in paths.items()}


def _load_split(args):
    corpus = load_corpus(args.interactions, args.trust)
    filtered = apply_threshold(corpus, args.threshold)
    return filtered, make_split(filtered)


def _base_config(args, **extra) -> TrainConfig:
    return TrainConfig(
        K=args.k, alpha=args.alpha, epochs=args.epochs, seed=args.seed,
        merged=not args.unmerged, **extra,
    )


def write_manifest(out_dir, command, config, inputs, seed, outputs, started) -> str:
    path = os.path.join(out_dir, "manifest.json")
    manifest = {
        "command": command,
        "version": __version__,
        "prng": PRNG,
        "config": config,
        "inputs": inputs,
        "seed": seed,
        "outputs": sorted(outputs),
        "duration_seconds": round(time.monotonic() - started, 3),
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _echo(args, exclude=("out", "verbose", "command", "func")) -> dict:
    out = {}
    for key, value in sorted(vars(args).items()):
        if key in exclude:
            continue
        if isinstance(value, ModelKind):
            value = value.value
        elif isinstance(value, list):
            value = [v.value if isinstance(v, ModelKind) else v for v in value]
        out[key] = value
    return out


# -- commands ---------------------------------------------------------------------


def cmd_train(args) -> int:
    started = time.monotonic()
    inputs = _inputs(args)
    _, sp = _load_split(args)
    config = _base_config(args, kind=args.model, eta=args.eta, lam=args.lam)
    os.makedirs(args.out, exist_ok=True)
    result = train(sp, config, track_objective=True, threads=args.threads)
    test = auc(result.params, sp, "test", threads=args.threads).auc

    ckpt = os.path.join(args.out, "checkpoint.txt")
    with open(ckpt, "w") as fh:
        save_checkpoint(result.params, fh)
    metrics = os.path.join(args.out, "metrics.csv")
    with open(metrics, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_COLUMNS)
        for epoch, (val, obj) in enumerate(zip(result.curve, result.objective), start=1):
            w.writerow([epoch, repr(val), repr(obj)])
    resolved = config.as_dict()
    resolved.update(threshold=args.threshold, threads=args.threads)
    write_manifest(args.out, "train", resolved, inputs, args.seed, [ckpt, metrics], started)
    print(f"test_auc={test!r}")
    return 0


def cmd_grid(args) -> int:
    started = time.monotonic()
    inputs = _inputs(args)
    _, sp = _load_split(args)
    base = _base_config(args, kind=args.model)
    os.makedirs(args.out, exist_ok=True)
    result = grid_search(sp, args.model, args.eta_grid, args.lambda_grid, base, args.threads)
    outputs = [os.path.join(args.out, "grid.csv")]
    with open(outputs[0], "w", newline="") as fh:
        write_grid_csv(result, fh, args.model.value)
    if result.best_params is not None:
        outputs.append(os.path.join(args.out, "checkpoint.txt"))
        with open(outputs[-1], "w") as fh:
            save_checkpoint(result.best_params, fh)
    write_manifest(args.out, "grid", _echo(args), inputs, args.seed, outputs, started)
    cell = result.best_cell
    if cell is None:
        print("every grid cell diverged", file=sys.stderr)
        return 1
    print(f"best eta={cell.eta!r} lambda={cell.lam!r} val_auc={cell.val_auc!r} "
          f"test_auc={cell.test_auc!r}")
    return 0


def cmd_sweep(args, parser) -> int:
    convert = {"threshold": _threshold, "k": _positive_int, "alpha": float}[args.sweep]
    try:
        values = _list_of(convert)(args.values)
    except argparse.ArgumentTypeError as exc:
        parser.error(f"argument --values: {exc}")
    started = time.monotonic()
    inputs = _inputs(args)
    os.makedirs(args.out, exist_ok=True)
    if args.sweep == "threshold":
        corpus = load_corpus(args.interactions, args.trust)
        base = _base_config(args)
        rows = threshold_sweep(corpus, values, args.models, base, args.eta_grid,
                               args.lambda_grid, args.threads)
        path = os.path.join(args.out, "threshold.csv")
        with open(path, "w", newline="") as fh:
            write_threshold_csv(rows, fh)
    else:
        _, sp = _load_split(args)
        base = _base_config(args, eta=args.eta, lam=args.lam)
        rows = sensitivity_sweep(sp, "K" if args.sweep == "k" else "alpha", values, base,
                                 args.threads)
        path = os.path.join(args.out, "sensitivity.csv")
        with open(path, "w", newline="") as fh:
            write_sensitivity_csv(rows, fh)
    config = _echo(args)
    config["values"] = values
    write_manifest(args.out, "sweep", config, inputs, args.seed, [path], started)
    print(f"wrote {len(rows)} rows to {path}")
    return 0


def cmd_synth(args, parser) -> int:
    started = time.monotonic()
    try:
        config = SynthConfig(
            num_users=args.num_users, num_items=args.num_items, num_clusters=args.num_clusters,
            seq_len_mean=args.seq_len_mean, friends_per_user=args.friends_per_user,
            mix=tuple(args.mix), noise=args.noise, seed=args.seed, start_spread=args.start_spread,
        )
    except ValueError as exc:
        parser.error(str(exc))
    data = generate(config)
    paths = write_dataset(data, args.out)
    resolved = {k: (list(v) if isinstance(v, tuple) else v)
                for k, v in vars(config).items()}
    write_manifest(args.out, "synth", resolved, {}, args.seed, list(paths), started)
    print(f"wrote {paths[0]} and {paths[1]}")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "train":
            return cmd_train(args)
        if args.command == "grid":
            return cmd_grid(args)
        if args.command == "sweep":
            return cmd_sweep(args, parser)
        return cmd_synth(args, parser)
    except (ParseError, EmptySplitError, TrainingDiverged) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
