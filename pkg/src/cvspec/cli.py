"""``cvspec`` command line: generate, estimate, transform, train, evaluate, check.

Exit codes: 0 success, 1 usage or input error, 2 numerical check failed.
Every command writes ``manifest.json`` next to its outputs.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, io, processes, spectra
from .config import load_process, load_train_config, read_dataset
from .learn import (
    TrainingDiverged,
    evaluate,
    gradcheck,
    init_params,
    load_params,
    save_params,
    taps_checksum,
    train,
)
from .transform import apply_transform, build_multiwavelet_graph, load_graph

log = logging.getLogger("cvspec")

EXIT_OK, EXIT_USAGE, EXIT_CHECK = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out: Path, args, configs: list, outputs: list, started: float) -> None:
    manifest = {
        "command": args.command,
        "argv": sys.argv[1:] if args.argv is None else args.argv,
        "configs": [str(c) for c in configs if c],
        "seed": args.seed,
        "threads": args.threads,
        "version": __version__,
        "outputs": {str(p.relative_to(out)): _sha256(p) for p in outputs},
        "wall_clock_seconds": time.time() - started,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _ext(fmt: str) -> str:
    return "csv" if fmt == "csv" else "spw"


def _seeded(spec, seed):
    return spec if seed is None else dataclasses.replace(spec, seed=seed)


# ---------------------------------------------------------------------------
# commands


def cmd_gen(args) -> tuple:
    spec = _seeded(load_process(args.config), args.seed)
    args.seed = spec.seed
    out = [args.out / f"signal_{i:04d}.{_ext(args.format)}" for i in range(args.count)]
    for i, path in enumerate(out):
        io.write_signal(path, processes.generate(spec, processes.trial_rng(spec.seed, i)), args.format)
    return [args.config], out, EXIT_OK


def cmd_dataset(args) -> tuple:
    out, configs = [], []
    for k, item in enumerate(args.cls):
        if "=" not in item:
            raise UsageError(f"--class expects NAME=CONFIG, got {item!r}")
        name, cfg = item.split("=", 1)
        configs.append(cfg)
        spec = load_process(cfg)
        seed = spec.seed if args.seed is None else args.seed
        d = args.out / name
        d.mkdir(parents=True, exist_ok=True)
        for i in range(args.count):
            path = d / f"{i:05d}.{_ext(args.format)}"
            # class k, sample i: independent stream per (seed, class, sample)
            rng = np.random.default_rng([seed, k, i])
            io.write_signal(path, processes.generate(spec, rng), args.format)
            out.append(path)
    return configs, out, EXIT_OK


def cmd_spectrum(args) -> tuple:
    spec = load_process(args.config)
    seed = spec.seed if args.seed is None else args.seed
    args.seed = seed
    omegas = spectra.frequency_grid(args.channels)
    out = []
    if args.estimator in ("absolute", "both"):
        est = spectra.estimate_absolute_spectrum(spec, omegas, args.n, args.trials, seed, threads=args.threads)
        est.to_csv(args.out / "absolute_spectrum.csv")
        out.append(args.out / "absolute_spectrum.csv")
    if args.estimator in ("power", "both"):
        est = spectra.estimate_power_spectrum(spec, omegas, args.n, args.trials, seed, threads=args.threads)
        est.to_csv(args.out / "power_spectrum.csv")
        out.append(args.out / "power_spectrum.csv")
    return [args.config], out, EXIT_OK


def cmd_transform(args) -> tuple:
    graph = load_graph(args.graph)
    x = io.read_signal(args.signal)
    params = load_params(args.params) if args.params else None
    fv = apply_transform(x, graph, params)
    path = args.out / "features.csv"
    fv.to_csv(path)
    return [args.graph, args.params], [path], EXIT_OK


def cmd_train(args) -> tuple:
    graph = load_graph(args.graph)
    X, y, classes = read_dataset(args.data)
    cfg, mode = load_train_config(
        args.train_config,
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        threads=args.threads,
        mode=args.mode,
        train_transform=False if args.fixed_features else None,
    )
    args.seed = cfg.seed
    params = init_params(graph, X.shape[1], len(classes), mode=mode, seed=cfg.seed, X=X)
    before = taps_checksum(params)
    params, hist = train(X, y, graph, params, cfg)
    acc, conf = evaluate(X, y, graph, params)
    save_params(params, args.out / "params.spwp")
    hist.to_csv(args.out / "history.csv")
    metrics = {
        "classes": classes,
        "train_accuracy": acc,
        "confusion": conf.tolist(),
        "mode": mode,
        "parameter_counts": params.parameter_counts(),
        "taps_checksum_before": before,
        "taps_checksum_after": taps_checksum(params),
    }
    (args.out / "metrics.json").write_text(json.dumps(metrics, indent=2) + "\n")
    outs = [args.out / n for n in ("params.spwp", "history.csv", "metrics.json")]
    return [args.graph, args.train_config], outs, EXIT_OK


def cmd_eval(args) -> tuple:
    graph = load_graph(args.graph)
    X, y, classes = read_dataset(args.data)
    params = load_params(args.params)
    acc, conf = evaluate(X, y, graph, params)
    metrics = {"classes": classes, "accuracy": acc, "confusion": conf.tolist()}
    (args.out / "metrics.json").write_text(json.dumps(metrics, indent=2) + "\n")
    print(f"accuracy {acc!r}")
    return [args.graph, args.params], [args.out / "metrics.json"], EXIT_OK


def cmd_gradcheck(args) -> tuple:
    seed = 0 if args.seed is None else args.seed
    args.seed = seed
    graph = load_graph(args.graph) if args.graph else build_multiwavelet_graph(2, 4)
    rng = np.random.default_rng(seed)
    X = 0.5 + rng.random((args.batch, args.length))
    y = np.arange(args.batch) % 2
    params = init_params(graph, args.length, 2, seed=seed, perturb=0.1, learn_mixing=True)
    params.arrays["classifier/W"] = rng.standard_normal(params.arrays["classifier/W"].shape)
    params.arrays["classifier/b"] = rng.standard_normal(2)
    params.arrays["classifier/scale"] = np.full(params.meta["n_features"], 0.1)
    report = gradcheck(X, y, graph, params, seed=seed, tolerance=args.tolerance, inject_bug=args.inject_bug)
    lines = report.lines()
    path = args.out / "gradcheck.txt"
    path.write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return [args.graph], [path], EXIT_OK if report.passed else EXIT_CHECK


COMMANDS = {
    "gen": cmd_gen,
    "dataset": cmd_dataset,
    "spectrum": cmd_spectrum,
    "transform": cmd_transform,
    "train": cmd_train,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--threads", type=int, default=1, help="worker threads; results do not depend on it")
    common.add_argument("--out", type=Path, required=True, help="output directory")
    common.add_argument("--format", choices=("csv", "bin"), default="csv", help="signal file format")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="cvspec", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("gen", parents=[common], help="generate signals from a process config")
    s.add_argument("--config", required=True, type=Path)
    s.add_argument("--count", type=int, default=1)

    s = sub.add_parser("dataset", parents=[common], help="generate a labelled dataset directory")
    s.add_argument("--class", dest="cls", action="append", required=True, metavar="NAME=CONFIG")
    s.add_argument("--count", type=int, default=100, help="signals per class")

    s = sub.add_parser("spectrum", parents=[common], help="Monte-Carlo absolute/power spectrum")
    s.add_argument("--config", required=True, type=Path)
    s.add_argument("--estimator", choices=("absolute", "power", "both"), default="absolute")
    s.add_argument("--n", type=int, default=511, help="block half-width")
    s.add_argument("--trials", type=int, default=1000)
    s.add_argument("--channels", type=int, default=64, help="frequencies 2*pi*m/channels")

    s = sub.add_parser("transform", parents=[common], help="features of one signal")
    s.add_argument("--signal", required=True, type=Path)
    s.add_argument("--graph", "--config", dest="graph", required=True, type=Path)
    s.add_argument("--params", type=Path)

    s = sub.add_parser("train", parents=[common], help="SGD training on a dataset directory")
    s.add_argument("--data", required=True, type=Path)
    s.add_argument("--graph", required=True, type=Path)
    s.add_argument("--train-config", "--config", dest="train_config", type=Path)
    s.add_argument("--mode", choices=("full_taps", "scales_only"))
    s.add_argument("--lr", type=float)
    s.add_argument("--epochs", type=int)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--fixed-features", action="store_true", help="train the classifier only")

    s = sub.add_parser("eval", parents=[common], help="accuracy of saved parameters")
    s.add_argument("--data", required=True, type=Path)
    s.add_argument("--graph", required=True, type=Path)
    s.add_argument("--params", required=True, type=Path)

    s = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient check")
    s.add_argument("--graph", "--config", dest="graph", type=Path, help="default: depth-2, 4-channel multiwavelet")
    s.add_argument("--length", type=int, default=64)
    s.add_argument("--batch", type=int, default=4)
    s.add_argument("--tolerance", type=float, default=1e-5)
    s.add_argument("--inject-bug", action="store_true", help="flip the modulus gradient sign")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = None if argv is None else list(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    started = time.time()
    args.out.mkdir(parents=True, exist_ok=True)
    try:
        configs, outputs, code = COMMANDS[args.command](args)
    except (UsageError, ValueError, FileNotFoundError, KeyError) as exc:
        print(f"cvspec {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDiverged as exc:
        print(f"cvspec {args.command}: {exc}", file=sys.stderr)
        return EXIT_CHECK
    _write_manifest(args.out, args, configs, outputs, started)
    return code


if __name__ == "__main__":
    sys.exit(main())
