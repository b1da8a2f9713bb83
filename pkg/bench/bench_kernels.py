"""Timing comparison of the kernel backends.

Runs each hot kernel in isolation and then a real training slice, once per
available backend, and prints a table with the speedup of the compiled
extension over the pure-Python fallback. Also asserts that both backends
produce bitwise-identical training losses, since backend choice must never
change results.

Usage: python3 bench/bench_kernels.py [--repeat N] [--size N]
"""
import argparse
import dataclasses
import random
import time
from array import array

from mtsent.autodiff import backend
from mtsent.awl import AlfVariant, DawlStrategy
from mtsent.synth import SynthSpec, generate
from mtsent.train import TrainConfig, train


def time_call(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def micro_benchmarks(size, repeat):
    rng = random.Random(1)
    x = array("d", [rng.uniform(-1, 1) for _ in range(size)])
    y = array("d", [rng.uniform(-1, 1) for _ in range(size)])
    out = array("d", bytes(8 * size))
    m = 64
    n = size // m
    w = array("d", [rng.uniform(-1, 1) for _ in range(m * n)])
    vec = array("d", [rng.uniform(-1, 1) for _ in range(n)])
    mv_out = array("d", bytes(8 * m))
    logits = array("d", [rng.uniform(-5, 5) for _ in range(256)])
    probs = array("d", bytes(8 * 256))
    g = array("d", [rng.uniform(-1, 1) for _ in range(size)])
    mom = array("d", bytes(8 * size))
    vel = array("d", bytes(8 * size))
    K = backend.K
    loops = 200
    return {
        "dot": lambda: [K.dot(x, y, size) for _ in range(loops)],
        "axpy_accum": lambda: [K.vec_axpy_accum(out, x, 0.5, size)
                               for _ in range(loops)],
        "matvec": lambda: [K.matvec(mv_out, w, vec, m, n)
                           for _ in range(loops)],
        "softmax_xent": lambda: [K.softmax_xent_forward(probs, logits,
                                                        256, 3)
                                 for _ in range(loops)],
        "adam_update": lambda: [K.adam_update(x, g, mom, vel, size,
                                              1e-3, 0.9, 0.999, 1e-8)
                                for _ in range(loops)],
    }


def training_slice(out_dir):
    spec = dataclasses.replace(SynthSpec(), train_size=48, test_size=8)
    train_ds, _ = generate(spec)
    cfg = TrainConfig(alf=AlfVariant.alf2(), strategy=DawlStrategy.OUTPUT,
                      epochs=2, batch_size=8, learning_rate=0.01,
                      seed=3, embedding_dim=16)
    report = train(train_ds, None, cfg, out_dir)
    with open(report.trajectory_path, "rb") as f:
        return f.read()


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5,
                        help="timing repetitions, best-of (default 5)")
    parser.add_argument("--size", type=int, default=4096,
                        help="vector length for micro benchmarks")
    args = parser.parse_args()

    names = backend.available()
    print(f"backends: {', '.join(names)} (active: {backend.active()})")
    if len(names) < 2:
        print("compiled kernels not built; timing the fallback only")

    results = {}
    for name in names:
        backend.use(name)
        for label, fn in micro_benchmarks(args.size, args.repeat).items():
            results.setdefault(label, {})[name] = time_call(fn, args.repeat)

    import tempfile
    trajectories = {}
    for name in names:
        backend.use(name)
        with tempfile.TemporaryDirectory() as td:
            t0 = time.perf_counter()
            trajectories[name] = training_slice(td)
            results.setdefault("train 2 epochs", {})[name] = (
                time.perf_counter() - t0)
    backend.use(names[-1])

    print(f"\n{'kernel':<16} " + " ".join(f"{n + ' (ms)':>14}" for n in names)
          + ("  speedup" if len(names) == 2 else ""))
    for label, times in results.items():
        row = f"{label:<16} " + " ".join(f"{1e3 * times[n]:14.3f}"
                                         for n in names)
        if len(names) == 2:
            row += f"  {times['python'] / times['compiled']:7.1f}x"
        print(row)

    if len(names) == 2:
        same = trajectories["python"] == trajectories["compiled"]
        print(f"\ntrajectory parity across backends: "
              f"{'bitwise identical' if same else 'MISMATCH'}")
        if not same:
            raise SystemExit(1)


if __name__ == "__main__":
    main()
