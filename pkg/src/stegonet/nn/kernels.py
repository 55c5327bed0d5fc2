"""Backend selection for the convolution hot loops.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
numpy implementation in ``_fallback`` is used. Set ``STEGONET_KERNELS=python``
to force the fallback, or call :func:`set_backend` at runtime.
"""
import logging
import os

import numpy as np

from . import _fallback

logger = logging.getLogger(__name__)

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

conv_out_size = _fallback.conv_out_size

_impl = _fallback
BACKEND = "python"


def available_backends() -> list[str]:
    return ["python"] + (["cython"] if _ckernels is not None else [])


def set_backend(name: str) -> None:
    global _impl, BACKEND
    if name == "cython":
        if _ckernels is None:
            raise RuntimeError("compiled kernels are not built; reinstall the package with Cython available")
        _impl = _ckernels
    elif name == "python":
        _impl = _fallback
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    BACKEND = name


def im2col(x: np.ndarray, k: int, stride: int, pad: int) -> np.ndarray:
    return _impl.im2col(np.ascontiguousarray(x), k, stride, pad)


def col2im(cols: np.ndarray, shape: tuple, k: int, stride: int, pad: int) -> np.ndarray:
    return _impl.col2im(np.ascontiguousarray(cols), tuple(int(s) for s in shape), k, stride, pad)


_requested = os.environ.get("STEGONET_KERNELS", "").strip().lower()
if _requested == "python" or _ckernels is None:
    if _requested == "cython":
        logger.warning("STEGONET_KERNELS=cython requested but the extension is missing; using numpy")
    set_backend("python")
else:
    set_backend("cython")
