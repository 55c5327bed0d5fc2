"""Compare the compiled and numpy im2col/col2im backends.

Usage: python3 benchmarks/bench_kernels.py [--repeat 5] [--train-steps 3]

Reports the best-of-N time per call for the kernel shapes the models hit at
64x64, then the time of a full training step (forward, backward, Adam) with
each backend selected.
"""
import argparse
import timeit

import numpy as np

from stegonet.models import StegoSystem, total_loss
from stegonet.nn import Adam, Tensor, kernels

# (batch, channels, height, width, kernel, stride, pad) seen in a 64x64 training step
CASES = [
    ("encoder conv1", (20, 3, 64, 64), 3, 2, 1),
    ("encoder conv2", (20, 16, 32, 32), 3, 2, 1),
    ("decoder residual", (10, 128, 8, 8), 3, 1, 1),
    ("decoder output", (10, 16, 64, 64), 3, 1, 1),
]


def best(fn, repeat: int) -> float:
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def bench_kernels(repeat: int) -> None:
    rng = np.random.default_rng(0)
    print(f"{'case':<18}{'op':<8}" + "".join(f"{b:>12}" for b in kernels.available_backends()) + f"{'speedup':>10}")
    for name, shape, k, s, p in CASES:
        x = rng.standard_normal(shape).astype(np.float32)
        cols = kernels.im2col(x, k, s, p)
        for op, fn in (
            ("im2col", lambda: kernels.im2col(x, k, s, p)),
            ("col2im", lambda: kernels.col2im(cols, shape, k, s, p)),
        ):
            times = {}
            for backend in kernels.available_backends():
                kernels.set_backend(backend)
                times[backend] = best(fn, repeat)
            row = f"{name:<18}{op:<8}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times.values())
            if "cython" in times:
                row += f"{times['python'] / times['cython']:>9.2f}x"
            print(row)


def bench_train_step(steps: int, size: int, batch: int) -> None:
    rng = np.random.default_rng(1)
    cover = Tensor(rng.random((batch, 3, size, size), dtype=np.float32))
    secret = Tensor(rng.random((batch, 3, size, size), dtype=np.float32))
    print(f"\ntraining step, batch {batch}, {size}x{size}")
    for backend in kernels.available_backends():
        kernels.set_backend(backend)
        system = StegoSystem(seed=0)
        opt = Adam(system.parameters())

        def step():
            stego, extracted = system(cover, secret)
            loss = total_loss(cover, stego, secret, extracted, 0.5)
            opt.zero_grad()
            loss.backward()
            opt.step()

        step()  # warm-up
        print(f"  {backend:<8}{best(step, steps) * 1e3:>10.1f} ms")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--train-steps", type=int, default=3)
    parser.add_argument("--size", type=int, default=64)
    parser.add_argument("--batch", type=int, default=10)
    args = parser.parse_args()
    if "cython" not in kernels.available_backends():
        print("compiled kernels not built; only the numpy backend is timed")
    previous = kernels.BACKEND
    try:
        bench_kernels(args.repeat)
        bench_train_step(args.train_steps, args.size, args.batch)
    finally:
        kernels.set_backend(previous)


if __name__ == "__main__":
    main()
