"""Compiled vs pure-numpy kernels, alone and inside a full training step.

    python3 benchmarks/bench_kernels.py [--repeat N]

Shapes match a default training batch: 16 clips x 16x16 sites, T=8, D=16.
"""
import argparse
import timeit

import numpy as np

from sdr.clipgen import FAKE, REAL, Cell, DatasetSpec, gen_dataset
from sdr.substrate import kernels
from sdr.substrate.tensor import LN_EPS
from sdr.trainer import SDRModel, TrainConfig, train_step


def kernel_cases(dtype):
    rng = np.random.default_rng(0)
    n_sites, T, D = 16 * 256, 8, 16
    x = rng.standard_normal((n_sites * T, D)).astype(dtype)
    g = rng.standard_normal(x.shape).astype(dtype)
    gain = np.ones(D, dtype)
    bias = np.zeros(D, dtype)
    _, xhat, rstd = kernels.layer_norm_forward(x, gain, bias, LN_EPS)
    sites = rng.standard_normal((n_sites, T, D)).astype(dtype)
    offsets = np.arange(0, n_sites + 1, 256)
    return {
        "layer_norm_forward": lambda: kernels.layer_norm_forward(x, gain, bias, LN_EPS),
        "layer_norm_backward": lambda: kernels.layer_norm_backward(g, xhat, rstd, gain),
        "pool_exact": lambda: kernels.pool_exact(sites, offsets),
    }


def step_case():
    spec = DatasetSpec(cells=[Cell(REAL, 0, 8), Cell(FAKE, 1, 8)], seed=0)
    clips, _ = gen_dataset(spec)
    model = SDRModel(TrainConfig(), 8, 3)
    rng = np.random.default_rng(0)
    counter = iter(range(1, 10 ** 6))
    return lambda: train_step(model, clips, rng, next(counter))


def best_ms(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number * 1e3


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = ["python", "compiled"] if kernels.HAVE_COMPILED else ["python"]
    if not kernels.HAVE_COMPILED:
        print("compiled extension not built; showing the numpy fallback only")

    rows = []
    for name in ("layer_norm_forward", "layer_norm_backward", "pool_exact"):
        ms = {}
        for b in backends:
            with kernels.use_backend(b):
                ms[b] = best_ms(kernel_cases(np.float32)[name], args.repeat, 20)
        rows.append((name, ms))
    ms = {}
    for b in backends:
        with kernels.use_backend(b):
            fn = step_case()
            fn()  # warm-up: Adam buffers, first-touch allocations
            ms[b] = best_ms(fn, args.repeat, 2)
    rows.append(("train_step (n=4, batch 16)", ms))

    print(f"{'kernel':32s}" + "".join(f"{b + ' ms':>14s}" for b in backends) + ("     speedup" if len(backends) == 2 else ""))
    for name, ms in rows:
        line = f"{name:32s}" + "".join(f"{ms[b]:14.3f}" for b in backends)
        if len(backends) == 2:
            line += f"{ms['python'] / ms['compiled']:11.2f}x"
        print(line)


if __name__ == "__main__":
    main()
