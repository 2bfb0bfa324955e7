"""Parameter containers built on the autodiff Tensor.

A ``Module`` discovers parameters by walking its attributes in definition
order: Tensors with ``requires_grad`` are parameters, nested Modules and
lists of Modules recurse. That ordering is what the checkpoint format and
the optimizer key off, so it is deterministic by construction.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, conv2d, matmul

__all__ = ["Module", "Linear", "Conv2d", "normal_param", "zeros_param", "ones_param"]


class Module:
    def named_parameters(self, prefix: str = "") -> list[tuple[str, Tensor]]:
        out: list[tuple[str, Tensor]] = []
        for name, value in vars(self).items():
            path = f"{prefix}{name}"
            if isinstance(value, Tensor):
                if value.requires_grad:
                    out.append((path, value))
            elif isinstance(value, Module):
                out.extend(value.named_parameters(f"{path}."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.extend(item.named_parameters(f"{path}.{i}."))
        return out

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def zero_grad(self) -> None:
        for t in self.parameters():
            t.zero_grad()

    def num_parameters(self) -> int:
        return sum(t.size for t in self.parameters())


def normal_param(rng: np.random.Generator, shape, std: float) -> Tensor:
    return Tensor(rng.normal(0.0, std, size=shape), requires_grad=True)


def zeros_param(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def ones_param(shape) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=True)


class Linear(Module):
    """Dense map on token rows: (T, c_in) @ weight (c_in, c_out) + bias."""

    def __init__(self, rng: np.random.Generator, c_in: int, c_out: int, bias: bool = True):
        self.weight = normal_param(rng, (c_in, c_out), c_in**-0.5)
        self.bias = zeros_param((c_out,)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = matmul(x, self.weight)
        if self.bias is not None:
            y = y + self.bias
        return y


class Conv2d(Module):
    def __init__(
        self,
        rng: np.random.Generator,
        c_in: int,
        c_out: int,
        kernel: int | tuple[int, int],
        stride: int = 1,
        padding=0,
        bias: bool = True,
        weight_scale: float = 1.0,
    ):
        kh, kw = (kernel, kernel) if isinstance(kernel, int) else kernel
        fan_in = c_in * kh * kw
        self.weight = normal_param(rng, (c_out, c_in, kh, kw), weight_scale * fan_in**-0.5)
        self.bias = zeros_param((c_out,)) if bias else None
        self.stride = stride
        self.padding = padding

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)
