#!/usr/bin/env python3
"""Time the compiled training kernels against the numpy fallback.

Runs sgd_epochs / evaluate_model / gradient_model on synthetic problems for
every backend that imports, prints best-of-N wall times and the speedup, and
cross-checks that the backends return the same numbers.

Usage: python3 benchmarks/bench_backends.py [--n 4000] [--epochs 4] ...
"""

from __future__ import annotations

import argparse
import importlib
import math
import time

import numpy as np

BACKEND_MODULES = (
    ("python", "fedfits._kernels.numpy_backend"),
    ("cython", "fedfits._kernels._fast"),
)


def load_backends() -> dict:
    loaded = {}
    for name, module in BACKEND_MODULES:
        try:
            loaded[name] = importlib.import_module(module)
        except ImportError as exc:
            print(f"note: backend {name!r} unavailable ({exc})")
    return loaded


def make_problem(kind_name: str, args, rng: np.random.Generator):
    dim, classes, hidden = args.dim, args.classes, args.hidden
    X = rng.normal(size=(args.n, dim))
    y = rng.integers(0, classes, size=args.n).astype(np.int64)
    if kind_name == "logreg":
        size = (dim + 1) * classes
        hidden = 0
    else:
        size = (dim + 1) * hidden + (hidden + 1) * classes
    w = rng.normal(scale=0.3, size=size)
    perms = np.stack([rng.permutation(args.n) for _ in range(args.epochs)]).astype(
        np.int64
    )
    return X, y, w, hidden, perms


def best_of(fn, repeat: int) -> float:
    best = math.inf
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=4000, help="samples per problem")
    parser.add_argument("--dim", type=int, default=20, help="feature count")
    parser.add_argument("--classes", type=int, default=10, help="label count")
    parser.add_argument("--hidden", type=int, default=32, help="mlp hidden width")
    parser.add_argument("--epochs", type=int, default=4, help="sgd epochs per timing")
    parser.add_argument("--batch", type=int, default=32, help="minibatch size")
    parser.add_argument("--repeat", type=int, default=5, help="timings per cell, best kept")
    args = parser.parse_args()

    backends = load_backends()
    if not backends:
        print("no backends importable; is the package installed?")
        return 1

    rng = np.random.default_rng(0)
    rows = []
    for kind_name in ("logreg", "mlp"):
        X, y, w, hidden, perms = make_problem(kind_name, args, rng)
        outputs = {}
        for op in ("sgd_epochs", "evaluate", "gradient"):
            times = {}
            for name, mod in backends.items():
                kind = mod.KIND_LOGREG if kind_name == "logreg" else mod.KIND_MLP1

                if op == "sgd_epochs":
                    call = lambda: mod.sgd_epochs(
                        kind, w, args.dim, hidden, args.classes, X, y,
                        0.05, args.batch, perms,
                    )
                elif op == "evaluate":
                    call = lambda: mod.evaluate_model(
                        kind, w, args.dim, hidden, args.classes, X, y
                    )
                else:
                    call = lambda: mod.gradient_model(
                        kind, w, args.dim, hidden, args.classes, X, y
                    )
                outputs.setdefault(op, {})[name] = call()
                times[name] = best_of(call, args.repeat)
            rows.append((kind_name, op, times))

        # the two implementations must tell the same story
        if len(backends) == 2:
            sgd = outputs["sgd_epochs"]
            drift = float(np.max(np.abs(sgd["python"] - sgd["cython"])))
            print(f"{kind_name}: max |w_python - w_cython| after sgd = {drift:.3e}")

    names = list(backends)
    header = ["problem", "op"] + [f"{n} ms" for n in names]
    if len(names) == 2:
        header.append("speedup")
    widths = [10, 12] + [12] * (len(header) - 2)
    line = "  ".join(h.ljust(w) for h, w in zip(header, widths))
    print()
    print(line)
    print("-" * len(line))
    for kind_name, op, times in rows:
        cells = [kind_name.ljust(widths[0]), op.ljust(widths[1])]
        cells += [f"{times[n] * 1000:10.3f}  " for n in names]
        if len(names) == 2:
            cells.append(f"{times['python'] / times['cython']:8.1f}x")
        print("  ".join(cells))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
