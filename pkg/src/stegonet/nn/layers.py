"""Module containers and the three parameterized layers the models use."""
from __future__ import annotations

from collections import OrderedDict
from typing import Iterator

import numpy as np

from . import ops
from .tensor import Parameter, Tensor


class Module:
    """Minimal parameter container.

    Parameters, buffers and sub-modules are registered in assignment order, which
    fixes the declaration order used for checkpoints and the optimizer.
    """

    def __init__(self):
        object.__setattr__(self, "_params", OrderedDict())
        object.__setattr__(self, "_buffers", OrderedDict())
        object.__setattr__(self, "_modules", OrderedDict())
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        self._buffers[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, p in self._params.items():
            yield prefix + name, p
        for name, m in self._modules.items():
            yield from m.named_parameters(prefix + name + ".")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name, b in self._buffers.items():
            yield prefix + name, b
        for name, m in self._modules.items():
            yield from m.named_buffers(prefix + name + ".")

    def named_modules(self, prefix: str = "") -> Iterator[tuple[str, "Module"]]:
        yield prefix.rstrip("."), self
        for name, m in self._modules.items():
            yield from m.named_modules(prefix + name + ".")

    def assign_names(self) -> None:
        for name, p in self.named_parameters():
            p.name = name

    def train(self, mode: bool = True) -> "Module":
        for _, m in self.named_modules():
            object.__setattr__(m, "training", mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def astype(self, dtype) -> "Module":
        """Cast parameters and buffers in place (float64 for gradient checks)."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        for _, m in self.named_modules():
            for name in list(m._buffers):
                m.register_buffer(name, m._buffers[name].astype(dtype))
        return self

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def describe(self, prefix: str = "") -> list[dict]:
        """Layer-by-layer architecture entries, in execution order."""
        out = []
        for name, m in self._modules.items():
            out.extend(m.describe(prefix + name + "."))
        return out


def _he_uniform(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int, padding: int, rng: np.random.Generator):
        super().__init__()
        self.c_in, self.c_out, self.kernel, self.stride, self.padding = c_in, c_out, kernel, stride, padding
        self.weight = Parameter(_he_uniform(rng, (c_out, c_in, kernel, kernel), c_in * kernel * kernel))
        self.bias = Parameter(np.zeros(c_out, dtype=np.float32))

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, self.stride, self.padding)

    def describe(self, prefix: str = "") -> list[dict]:
        return [{
            "name": prefix.rstrip("."),
            "type": "conv2d",
            "in_channels": self.c_in,
            "out_channels": self.c_out,
            "kernel": self.kernel,
            "stride": self.stride,
            "padding": self.padding,
            "weight_shape": list(self.weight.shape),
        }]


class ConvTranspose2d(Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int, padding: int, rng: np.random.Generator):
        super().__init__()
        self.c_in, self.c_out, self.kernel, self.stride, self.padding = c_in, c_out, kernel, stride, padding
        # each output pixel sees about c_in * k * k / stride^2 inputs
        fan_in = max(1, c_in * kernel * kernel // (stride * stride))
        self.weight = Parameter(_he_uniform(rng, (c_in, c_out, kernel, kernel), fan_in))
        self.bias = Parameter(np.zeros(c_out, dtype=np.float32))

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv_transpose2d(x, self.weight, self.bias, self.stride, self.padding)

    def describe(self, prefix: str = "") -> list[dict]:
        return [{
            "name": prefix.rstrip("."),
            "type": "conv_transpose2d",
            "in_channels": self.c_in,
            "out_channels": self.c_out,
            "kernel": self.kernel,
            "stride": self.stride,
            "padding": self.padding,
            "weight_shape": list(self.weight.shape),
        }]


class BatchNorm2d(Module):
    def __init__(self, channels: int, momentum: float = ops.BN_MOMENTUM, eps: float = ops.BN_EPS):
        super().__init__()
        self.channels, self.momentum, self.eps = channels, momentum, eps
        self.gamma = Parameter(np.ones(channels, dtype=np.float32))
        self.beta = Parameter(np.zeros(channels, dtype=np.float32))
        self.register_buffer("running_mean", np.zeros(channels, dtype=np.float32))
        self.register_buffer("running_var", np.ones(channels, dtype=np.float32))

    def forward(self, x: Tensor) -> Tensor:
        return ops.batch_norm(
            x, self.gamma, self.beta, self.running_mean, self.running_var,
            self.training, self.momentum, self.eps,
        )

    def describe(self, prefix: str = "") -> list[dict]:
        return [{
            "name": prefix.rstrip("."),
            "type": "batch_norm",
            "channels": self.channels,
            "eps": self.eps,
            "momentum": self.momentum,
        }]
