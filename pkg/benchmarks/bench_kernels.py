#!/usr/bin/env python3
"""Compare the compiled accumulation kernels against the NumPy fallback.

Times the three hot operations (entry-wise reconstruction, factor-mode
numerator/denominator sums, bias sums) on both backends over a few
workload sizes, then a full six-group training sweep through the public
trainer with each backend forced in turn.

Run from the repository root:

    python3 benchmarks/bench_kernels.py [--entries N ...] [--rank R] [--repeats K]
"""

import argparse
import importlib
import statistics
import time

import numpy as np


def load_backends():
    backends = {}
    backends["numpy"] = importlib.import_module("betacp._kernels_py")
    try:
        backends["cython"] = importlib.import_module("betacp._kernels_cy")
    except ImportError:
        print("compiled extension not importable; benchmarking the fallback only")
    return backends


def make_workload(n_entries, rank, seed=0):
    rng = np.random.default_rng(seed)
    # index ranges shaped like a sparse QoS tensor: few users/time slices,
    # many services
    dims = (150, max(50, n_entries // 40), 64)
    ii = rng.integers(0, dims[0], n_entries)
    jj = rng.integers(0, dims[1], n_entries)
    kk = rng.integers(0, dims[2], n_entries)
    return {
        "dims": dims,
        "ii": ii, "jj": jj, "kk": kk,
        "U": rng.uniform(0.01, 0.5, (dims[0], rank)),
        "S": rng.uniform(0.01, 0.5, (dims[1], rank)),
        "T": rng.uniform(0.01, 0.5, (dims[2], rank)),
        "a": rng.uniform(0.0, 0.05, dims[0]),
        "b": rng.uniform(0.0, 0.05, dims[1]),
        "c": rng.uniform(0.0, 0.05, dims[2]),
        "wnum": rng.uniform(0.1, 2.0, n_entries),
        "wden": rng.uniform(0.1, 2.0, n_entries),
    }


def time_call(fn, repeats):
    samples = []
    fn()  # warm-up (JIT-free, but touches caches / allocates)
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append((time.perf_counter() - t0) * 1e3)
    return statistics.median(samples)


def bench_kernels(backends, w, repeats):
    n = w["ii"].shape[0]
    ops = {
        "predict_entries": lambda mod: mod.predict_entries(
            w["U"], w["S"], w["T"], w["a"], w["b"], w["c"],
            w["ii"], w["jj"], w["kk"]),
        "mode_update_terms": lambda mod: mod.mode_update_terms(
            w["ii"], w["dims"][0], w["S"], w["jj"], w["T"], w["kk"],
            w["wnum"], w["wden"]),
        "bias_update_terms": lambda mod: mod.bias_update_terms(
            w["ii"], w["dims"][0], w["wnum"], w["wden"]),
    }
    rows = []
    for op_name, op in ops.items():
        timings = {name: time_call(lambda m=mod: op(m), repeats)
                   for name, mod in backends.items()}
        rows.append((op_name, n, timings))
    return rows


def bench_sweep(n_entries, rank, repeats):
    """Full Gauss-Seidel sweep through the public API, per backend."""
    from betacp import kernels
    from betacp.data import ObservedTensor
    from betacp.model import PredictionCache, init_random
    from betacp.objective import HyperParams
    from betacp.trainer import run_sweep

    w = make_workload(n_entries, rank, seed=1)
    # the observation container rejects duplicate triples, so draw unique
    # linear positions (oversample, dedupe, truncate)
    rng = np.random.default_rng(2)
    dims = w["dims"]
    total = dims[0] * dims[1] * dims[2]
    lin = np.unique(rng.integers(0, total, int(n_entries * 1.05) + 16))[:n_entries]
    n_entries = lin.shape[0]
    ii = lin // (dims[1] * dims[2])
    rem = lin % (dims[1] * dims[2])
    tensor = ObservedTensor(
        dims, ii, rem // dims[2], rem % dims[2],
        rng.uniform(0.1, 2.0, n_entries),
    )
    hp = HyperParams(beta=1.5, lam=0.01, lam_b=0.01)
    # the trainer resolves kernels.<fn> at call time, so rebinding the
    # module attributes forces a backend without re-importing anything
    hooks = ("predict_entries", "mode_update_terms", "bias_update_terms")
    saved = {fn: getattr(kernels, fn) for fn in hooks}
    timings = {}
    try:
        for name, mod in load_backends().items():
            for fn in hooks:
                setattr(kernels, fn, getattr(mod, fn))

            def one_sweep():
                model = init_random(w["dims"], rank, seed=3)
                cache = PredictionCache(tensor)
                cache.refresh(model)
                run_sweep(model, tensor, hp, cache)

            timings[name] = time_call(one_sweep, repeats)
    finally:
        for fn, impl in saved.items():
            setattr(kernels, fn, impl)
    return timings


def print_table(rows, backends):
    names = list(backends)
    header = f"{'operation':<20} {'entries':>9} " + "".join(
        f"{name + ' (ms)':>14}" for name in names)
    if len(names) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for op_name, n, timings in rows:
        line = f"{op_name:<20} {n:>9} " + "".join(
            f"{timings[name]:>14.3f}" for name in names)
        if len(names) == 2:
            line += f"{timings[names[0]] / timings[names[1]]:>9.1f}x"
        print(line)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--entries", type=int, nargs="+",
                    default=[10_000, 100_000, 1_000_000])
    ap.add_argument("--rank", type=int, default=4)
    ap.add_argument("--repeats", type=int, default=7)
    args = ap.parse_args()

    backends = load_backends()
    rows = []
    for n in args.entries:
        rows.extend(bench_kernels(backends, make_workload(n, args.rank), args.repeats))
    print_table(rows, backends)

    print()
    sweep_n = args.entries[-1]
    timings = bench_sweep(sweep_n, args.rank, max(3, args.repeats // 2))
    line = ", ".join(f"{name}: {ms:.1f} ms" for name, ms in timings.items())
    print(f"full training sweep ({sweep_n} entries, rank {args.rank}): {line}")


if __name__ == "__main__":
    main()
