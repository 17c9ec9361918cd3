"""Command-line front end.

Subcommands cover the full pipeline: ``synth`` (planted-factor data),
``split`` (seeded partitioning), ``train`` (fixed hyper-parameters),
``adapt`` (swarm-adapted hyper-parameters), ``predict``, and ``eval``.

A JSON config file (``--config``) mirrors the long flag names
(``{"rank": 4, "lambda": 0.01, ...}``); explicit flags always win over
config values, and config values win over built-in defaults.

Exit codes: 0 success, 1 usage/configuration error, 2 data error
(unreadable or malformed inputs), 3 numerical divergence during
training.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .data import load_observations, generate_synthetic, split, write_split_files
from .errors import DataError, TrainingDiverged, UsageError
from .metrics import evaluate
from .model import init_random, load_model, save_model
from .objective import HyperParams
from .swarm import SwarmConfig, adapt_train, write_swarm_csv
from .trainer import TrainConfig, train

# config key -> argparse destination ("lambda" is a Python keyword, so the
# parser stores it under a different destination name)
_CONFIG_KEYS = {
    "data": "data", "rank": "rank", "beta": "beta",
    "lambda": "lam", "lambda_b": "lam_b", "adaptive": "adaptive",
    "max_iters": "max_iters", "seed": "seed", "split": "split",
    "model": "model", "out": "out", "report": "report",
    "reproducible": "reproducible", "dims": "dims",
    "density": "density", "noise_sigma": "noise_sigma",
}

_DEFAULTS = {
    "rank": 4, "beta": 2.0, "lam": 0.01, "lam_b": 0.01,
    "adaptive": False, "max_iters": 100, "seed": 0, "split": "7:1:2",
    "reproducible": False, "dims": "142,4532,64",
    "density": 0.001, "noise_sigma": 0.01,
}


class _Parser(argparse.ArgumentParser):
    """argparse's default error path calls sys.exit(2); route it through
    the package's exit-code contract instead (usage errors are 1)."""

    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file mirroring the long flag names")
    common.add_argument("--seed", type=int, help="RNG seed (default 0)")
    common.add_argument("--reproducible", action="store_const", const=True,
                        help="make report files byte-identical across reruns")

    parser = _Parser(prog="betacp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, help_, handler):
        p = sub.add_parser(name, parents=[common], help=help_, description=help_,
                           formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        p.set_defaults(handler=handler)
        return p

    p = add("train", "fit a factor model at fixed hyper-parameters", _cmd_train)
    p.add_argument("--data", help="observation CSV (i,j,k,y per line)")
    p.add_argument("--rank", type=int, help="latent dimension (default 4)")
    p.add_argument("--beta", type=float, help="divergence shape (default 2.0)")
    p.add_argument("--lambda", dest="lam", type=float, help="factor penalty (default 0.01)")
    p.add_argument("--lambda-b", dest="lam_b", type=float, help="bias penalty (default 0.01)")
    p.add_argument("--adaptive", action="store_const", const=True,
                   help="swarm-adapt the hyper-parameters instead of fixing them")
    p.add_argument("--max-iters", type=int, help="sweep budget (default 100)")
    p.add_argument("--split", help="train:validation:test ratios (default 7:1:2)")
    p.add_argument("--model", help="output model path (default model.json)")
    p.add_argument("--report", help="output report CSV path (default report.csv)")

    p = add("adapt", "fit with swarm-adapted hyper-parameters", _cmd_adapt)
    p.add_argument("--data", help="observation CSV (i,j,k,y per line)")
    p.add_argument("--rank", type=int, help="latent dimension (default 4)")
    p.add_argument("--max-iters", type=int, help="swarm round budget (default 100)")
    p.add_argument("--split", help="train:validation:test ratios (default 7:1:2)")
    p.add_argument("--model", help="output model path (default model.json)")
    p.add_argument("--report", help="output trajectory CSV path (default report.csv)")

    p = add("predict", "reconstruct values at given index triples", _cmd_predict)
    p.add_argument("--model", help="trained model JSON")
    p.add_argument("--data", help="CSV of i,j,k triples (a 4th column is ignored)")
    p.add_argument("--out", help="output CSV path (default: stdout)")

    p = add("eval", "score a model against held-out observations", _cmd_eval)
    p.add_argument("--model", help="trained model JSON")
    p.add_argument("--data", help="observation CSV with ground-truth values")
    p.add_argument("--out", help="optional JSON result path")

    p = add("synth", "generate a planted-factor synthetic tensor", _cmd_synth)
    p.add_argument("--dims", help="I,J,K tensor shape (default 142,4532,64)")
    p.add_argument("--rank", type=int, help="planted rank (default 4)")
    p.add_argument("--density", type=float, help="observed fraction (default 0.001)")
    p.add_argument("--noise-sigma", type=float, help="gaussian noise level (default 0.01)")
    p.add_argument("--out", help="output observation CSV (default synthetic.csv)")
    p.add_argument("--model", help="optional path for the ground-truth model")

    p = add("split", "partition observations into train/validation/test", _cmd_split)
    p.add_argument("--data", help="observation CSV")
    p.add_argument("--split", help="ratios (default 7:1:2)")
    p.add_argument("--out", help="output prefix (default: data path without extension)")

    return parser


def _merge_config(args: argparse.Namespace) -> None:
    """Fill unset options from the config file, then from the defaults."""
    if getattr(args, "config", None):
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise UsageError(f"cannot open config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"{args.config}: not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise UsageError(f"{args.config}: config must be a JSON object")
        for key, value in doc.items():
            dest = _CONFIG_KEYS.get(key)
            if dest is None:
                raise UsageError(f"{args.config}: unknown config key {key!r}")
            if hasattr(args, dest) and getattr(args, dest) is None:
                setattr(args, dest, value)
    for dest, value in _DEFAULTS.items():
        if hasattr(args, dest) and getattr(args, dest) is None:
            setattr(args, dest, value)


def _require(args, *dests) -> None:
    for dest in dests:
        if getattr(args, dest, None) is None:
            raise UsageError(f"--{dest.replace('_', '-')} is required (flag or config)")


def _parse_ratios(text) -> tuple[float, float, float]:
    parts = str(text).split(":")
    if len(parts) != 3:
        raise UsageError(f"--split expects three ratios like 7:1:2, got {text!r}")
    try:
        weights = [float(p) for p in parts]
    except ValueError as exc:
        raise UsageError(f"--split {text!r}: {exc}") from exc
    if any(w < 0 for w in weights) or sum(weights) <= 0:
        raise UsageError(f"--split ratios must be nonnegative with a positive sum, got {text!r}")
    total = sum(weights)
    return (weights[0] / total, weights[1] / total, weights[2] / total)


def _parse_dims(text) -> tuple[int, int, int]:
    parts = str(text).split(",")
    if len(parts) != 3:
        raise UsageError(f"--dims expects I,J,K, got {text!r}")
    try:
        dims = tuple(int(p) for p in parts)
    except ValueError as exc:
        raise UsageError(f"--dims {text!r}: {exc}") from exc
    if any(d < 1 for d in dims):
        raise UsageError(f"--dims must be positive, got {text!r}")
    return dims


def _load_split(args):
    tensor = load_observations(args.data)
    ratios = _parse_ratios(args.split)
    return split(tensor, ratios, int(args.seed))


def _print_test_metrics(model, test) -> None:
    if len(test) == 0:
        return
    pred = model.predict(test.i_idx, test.j_idx, test.k_idx)
    result = evaluate(pred, test.values)
    print(f"test: mae={result.mae!r} rmse={result.rmse!r} count={result.count}")


def _cmd_train(args) -> int:
    if args.adaptive:
        return _cmd_adapt(args)
    _require(args, "data")
    ds = _load_split(args)
    hp = HyperParams(beta=float(args.beta), lam=float(args.lam), lam_b=float(args.lam_b))
    cfg = TrainConfig(hp=hp, max_iters=int(args.max_iters), seed=int(args.seed))
    model0 = init_random(ds.dims, int(args.rank), int(args.seed))
    model, report = train(model0, ds, cfg)
    print(
        f"trained rank={args.rank} beta={hp.beta!r} lambda={hp.lam!r} "
        f"lambda_b={hp.lam_b!r} on {len(ds.train)}/{len(ds.validation)}/{len(ds.test)} "
        "train/validation/test entries"
    )
    print(
        f"stopped after {len(report.records)} iterations ({report.stop_reason}); "
        f"best validation rmse {report.best_val_rmse!r} at iteration {report.best_iteration}"
    )
    _print_test_metrics(model, ds.test)
    model_path = args.model or "model.json"
    report_path = args.report or "report.csv"
    save_model(model, model_path, extra={
        "beta": hp.beta, "lambda": hp.lam, "lambda_b": hp.lam_b,
        "rank": int(args.rank), "seed": int(args.seed), "split": str(args.split),
        "stop_reason": report.stop_reason, "best_iteration": report.best_iteration,
    })
    report.to_csv(report_path, zero_elapsed=bool(args.reproducible))
    print(f"wrote model to {model_path}")
    print(f"wrote report to {report_path}")
    return 0


def _cmd_adapt(args) -> int:
    _require(args, "data")
    ds = _load_split(args)
    scfg = SwarmConfig(seed=int(args.seed), max_rounds=int(args.max_iters))
    tcfg = TrainConfig(max_iters=int(args.max_iters), seed=int(args.seed))
    model, hp, report = adapt_train(ds, int(args.rank), scfg, tcfg)
    print(
        f"swarm: particles={scfg.q} omega={scfg.omega!r} c1={scfg.c1!r} c2={scfg.c2!r}, "
        f"{len(report.records)} rounds ({report.stop_reason})"
    )
    print(
        f"adapted hyper-parameters: beta={hp.beta!r} lambda={hp.lam!r} "
        f"lambda_b={hp.lam_b!r} (validation rmse {report.best_val_rmse!r})"
    )
    _print_test_metrics(model, ds.test)
    model_path = args.model or "model.json"
    report_path = args.report or "report.csv"
    save_model(model, model_path, extra={
        "beta": hp.beta, "lambda": hp.lam, "lambda_b": hp.lam_b,
        "rank": int(args.rank), "seed": int(args.seed), "split": str(args.split),
        "adapted": True, "stop_reason": report.stop_reason,
        "best_round": report.best_iteration,
    })
    write_swarm_csv(report.swarm_rows, report_path)
    print(f"wrote model to {model_path}")
    print(f"wrote swarm trajectory to {report_path}")
    return 0


def _read_triples(path, dims):
    ii, jj, kk = [], [], []
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = [f.strip() for f in line.split(",")]
            if len(fields) not in (3, 4):
                raise DataError(f"{path}:{lineno}: expected i,j,k (or i,j,k,y), got {len(fields)} fields")
            try:
                i, j, k = int(fields[0]), int(fields[1]), int(fields[2])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: malformed record: {exc}") from exc
            if not (0 <= i < dims[0] and 0 <= j < dims[1] and 0 <= k < dims[2]):
                raise DataError(f"{path}:{lineno}: index ({i},{j},{k}) outside model dims {dims}")
            ii.append(i)
            jj.append(j)
            kk.append(k)
    if not ii:
        raise DataError(f"{path}: no index triples found")
    return (np.array(ii, dtype=np.int64), np.array(jj, dtype=np.int64),
            np.array(kk, dtype=np.int64))


def _cmd_predict(args) -> int:
    _require(args, "model", "data")
    model = load_model(args.model)
    ii, jj, kk = _read_triples(args.data, model.dims)
    pred = model.predict(ii, jj, kk)
    lines = ["# i,j,k,yhat"]
    lines += [f"{ii[n]},{jj[n]},{kk[n]},{float(pred[n])!r}" for n in range(len(pred))]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"wrote {len(pred)} predictions to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_eval(args) -> int:
    _require(args, "model", "data")
    model = load_model(args.model)
    tensor = load_observations(args.data, dims=model.dims)
    if len(tensor) == 0:
        raise DataError(f"{args.data}: nothing to evaluate")
    pred = model.predict(tensor.i_idx, tensor.j_idx, tensor.k_idx)
    result = evaluate(pred, tensor.values)
    print(f"count={result.count}")
    print(f"mae={result.mae!r}")
    print(f"rmse={result.rmse!r}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump({"mae": result.mae, "rmse": result.rmse, "count": result.count}, fh)
            fh.write("\n")
        print(f"wrote result to {args.out}")
    return 0


def _cmd_synth(args) -> int:
    dims = _parse_dims(args.dims)
    tensor, truth = generate_synthetic(
        dims, int(args.rank), float(args.density), float(args.noise_sigma), int(args.seed)
    )
    out = args.out or "synthetic.csv"
    tensor.save_csv(out)
    print(f"generated {len(tensor)} observations on dims {dims} (rank {args.rank})")
    print(f"wrote observations to {out}")
    if args.model:
        save_model(truth, args.model, extra={"planted": True, "seed": int(args.seed)})
        print(f"wrote ground-truth model to {args.model}")
    return 0


def _cmd_split(args) -> int:
    _require(args, "data")
    ds = _load_split(args)
    prefix = args.out
    if prefix is None:
        stem = str(args.data)
        prefix = stem[: -len(".csv")] if stem.endswith(".csv") else stem
    manifest = write_split_files(ds, prefix)
    counts = manifest["counts"]
    print(
        f"split {sum(counts.values())} observations into "
        f"{counts['train']}/{counts['validation']}/{counts['test']} train/validation/test"
    )
    print(f"wrote {prefix}.train.csv, {prefix}.validation.csv, {prefix}.test.csv")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        _merge_config(args)
        return args.handler(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TrainingDiverged as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return 3
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # argparse --help / --version
        code = exc.code
        return int(code) if code is not None else 0


if __name__ == "__main__":
    sys.exit(main())
