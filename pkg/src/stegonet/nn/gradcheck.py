"""Central finite-difference check of reverse-mode gradients."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, no_grad, sum_


def numerical_grad(f: Callable[[], float], arr: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """d f / d arr by central differences, perturbing ``arr`` in place."""
    grad = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = f()
        flat[i] = orig - step
        lo = f()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * step)
    return grad


def max_relative_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def gradcheck(
    fn: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    step: float = 1e-5,
    tol: float = 1e-3,
    seed: int = 0,
) -> dict[int, float]:
    """Compare analytic and numerical gradients of ``fn(*inputs)``.

    A non-scalar output is reduced with a fixed random projection so every output
    element contributes. Inputs must be float64. Returns the max relative error
    per input index and raises ``AssertionError`` if any exceeds ``tol``.
    """
    for t in inputs:
        if t.dtype != np.float64:
            raise TypeError("gradcheck needs float64 inputs")
        t.requires_grad = True
        t.grad = None

    out = fn(*inputs)
    proj = np.random.default_rng(seed).standard_normal(out.shape)

    def scalar() -> float:
        with no_grad():
            return float(np.sum(fn(*inputs).data * proj))

    sum_(out * proj).backward()

    errors = {}
    for i, t in enumerate(inputs):
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = numerical_grad(scalar, t.data, step)
        errors[i] = max_relative_error(analytic, numeric)
    bad = {i: e for i, e in errors.items() if e >= tol}
    if bad:
        raise AssertionError(f"gradient mismatch (max relative error per input): {bad}")
    return errors
