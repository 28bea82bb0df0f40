"""Compare the compiled kernels with the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from portsel import kernels
from portsel.synthetic import gen_synthetic
from portsel.text_encoder import tokenize


def bench(label, fn, repeat):
    best = min(timeit.repeat(fn, number=1, repeat=repeat))
    return label, best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--instances", type=int, default=200)
    args = ap.parse_args()

    if kernels.compiled is None:
        raise SystemExit("compiled extension not available; build with `pip install -e . --no-build-isolation`")

    ds = gen_synthetic(0, args.instances, 12, 4)
    streams = [list(tokenize(t).tokens) for t in ds.texts.values()]
    n_tokens = sum(len(s) for s in streams)

    rng = np.random.default_rng(0)
    X = rng.normal(size=(args.instances, 768))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    Y = (rng.random((args.instances, 12)) < 0.3).astype(np.float64)
    order = rng.permutation(args.instances).astype(np.int64)

    rows = []
    for name, mod in (("python", kernels.pure), ("compiled", kernels.compiled)):
        rows.append((name, "hashed_counts", bench(name, lambda m=mod: [m.hashed_counts(s, (1, 2), 0, 768) for s in streams], args.repeat)[1]))

        def epoch(m=mod):
            W = np.zeros((12, 768))
            b = np.zeros(12)
            m.sgd_epoch(W, b, X, Y, order, 0.1, True, 2.0)

        rows.append((name, "sgd_epoch (multilabel)", bench(name, epoch, args.repeat)[1]))

    print(f"{args.instances} instances, {n_tokens} tokens, dim 768, 12 algorithms; best of {args.repeat}")
    print(f"{'kernel':24s} {'python s':>10s} {'compiled s':>11s} {'speedup':>8s}")
    for kernel in ("hashed_counts", "sgd_epoch (multilabel)"):
        py = next(t for n, k, t in rows if n == "python" and k == kernel)
        c = next(t for n, k, t in rows if n == "compiled" and k == kernel)
        print(f"{kernel:24s} {py:10.4f} {c:11.4f} {py / c:7.1f}x")


if __name__ == "__main__":
    main()
