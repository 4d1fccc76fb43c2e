#!/usr/bin/env python3
"""Compare the compiled kernel backend against the pure-Python fallback.

Runs the hot kernels (prune_prefix, nucleus_prefix, topk_indices,
log_sum_exp) on identical random inputs for both backends, checks that
the outputs match bit for bit, and reports wall-clock timings.  Also
times an end-to-end multipath decode with each backend swapped in.

Usage:
    python3 benchmarks/bench_kernels.py [--trials N] [--seed S]
"""

from __future__ import annotations

import argparse
import importlib
import math
import random
import sys
import time


def _load_backends():
    from multipath.kernels import pure

    try:
        from multipath.kernels import _fast
    except ImportError:
        _fast = None
    return pure, _fast


def _random_logprobs(rng: random.Random, n: int) -> list[float]:
    vals = [rng.uniform(0.01, 1.0) for _ in range(n)]
    total = math.fsum(vals)
    return [math.log(v / total) for v in vals]


def _random_probs(rng: random.Random, n: int) -> list[float]:
    vals = [rng.uniform(0.0, 1.0) for _ in range(n)]
    total = math.fsum(vals)
    return [v / total for v in vals]


def bench_kernel(name, fn_pure, fn_fast, arg_sets):
    # correctness first: identical outputs on every argument set
    for args in arg_sets:
        out_p = fn_pure(*args)
        out_f = fn_fast(*args)
        if out_p != out_f:
            raise SystemExit(f"{name}: backend mismatch on args {args!r}")

    t0 = time.perf_counter()
    for args in arg_sets:
        fn_pure(*args)
    t_pure = time.perf_counter() - t0

    t0 = time.perf_counter()
    for args in arg_sets:
        fn_fast(*args)
    t_fast = time.perf_counter() - t0
    return t_pure, t_fast


def bench_decode(backend_name: str, trials: int, seed: int) -> float:
    """Time multipath_decode end to end with one backend forced."""
    import multipath.kernels as kernels
    from multipath.models import greedy_trap_lm
    from multipath.decoding import MultipathConfig, multipath_decode

    module = importlib.import_module(f"multipath.kernels.{backend_name}")
    saved = (kernels.prune_prefix, kernels.nucleus_prefix,
             kernels.topk_indices, kernels.log_sum_exp)
    kernels.prune_prefix = module.prune_prefix
    kernels.nucleus_prefix = module.nucleus_prefix
    kernels.topk_indices = module.topk_indices
    kernels.log_sum_exp = module.log_sum_exp
    try:
        model = greedy_trap_lm()
        cfg = MultipathConfig(mass_fraction=0.95, max_width=7, max_len=24)
        t0 = time.perf_counter()
        for _ in range(trials):
            multipath_decode(model, (), cfg)
        return time.perf_counter() - t0
    finally:
        (kernels.prune_prefix, kernels.nucleus_prefix,
         kernels.topk_indices, kernels.log_sum_exp) = saved


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trials", type=int, default=2000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    pure, fast = _load_backends()
    if fast is None:
        print("compiled backend not available; build the extension first "
              "(pip install -e . without MULTIPATH_NO_EXT)", file=sys.stderr)
        return 1

    rng = random.Random(args.seed)
    rows = []

    prune_args = []
    for _ in range(args.trials):
        n = rng.randint(2, 64)
        prune_args.append((_random_logprobs(rng, n),
                           rng.uniform(0.5, 1.0), rng.randint(1, 16)))
    rows.append(("prune_prefix",) + bench_kernel(
        "prune_prefix", pure.prune_prefix, fast.prune_prefix, prune_args))

    nucleus_args = []
    for _ in range(args.trials):
        n = rng.randint(2, 64)
        nucleus_args.append((_random_probs(rng, n),
                             rng.uniform(0.5, 1.0), rng.randint(1, 16)))
    rows.append(("nucleus_prefix",) + bench_kernel(
        "nucleus_prefix", pure.nucleus_prefix, fast.nucleus_prefix,
        nucleus_args))

    topk_args = []
    for _ in range(args.trials):
        n = rng.randint(1, 64)
        topk_args.append(([rng.uniform(-5.0, 5.0) for _ in range(n)],
                          rng.randint(1, n)))
    rows.append(("topk_indices",) + bench_kernel(
        "topk_indices", pure.topk_indices, fast.topk_indices, topk_args))

    lse_args = []
    for _ in range(args.trials):
        n = rng.randint(1, 64)
        lse_args.append(([rng.uniform(-30.0, 0.0) for _ in range(n)],))
    rows.append(("log_sum_exp",) + bench_kernel(
        "log_sum_exp", pure.log_sum_exp, fast.log_sum_exp, lse_args))

    decode_trials = max(1, args.trials // 10)
    t_pure = bench_decode("pure", decode_trials, args.seed)
    t_fast = bench_decode("_fast", decode_trials, args.seed)
    rows.append(("multipath_decode", t_pure, t_fast))

    print(f"{'kernel':<18} {'pure (s)':>10} {'fast (s)':>10} {'speedup':>8}")
    for name, tp, tf in rows:
        ratio = tp / tf if tf > 0 else float("inf")
        print(f"{name:<18} {tp:>10.4f} {tf:>10.4f} {ratio:>7.2f}x")
    print(f"\nall outputs bit-identical across backends "
          f"({args.trials} trials per kernel)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
