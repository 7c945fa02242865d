"""Parameterised layers with a tiny module system (named parameters, buffers,
train/eval mode, flat state dicts)."""
from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import functional as F
from .tensor import Tensor, parameter


class Module:
    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._buffers: dict[str, np.ndarray] = {}
        self._children: dict[str, Module] = {}
        self.training = True

    def __setattr__(self, name, value):
        if isinstance(value, Module) and name != "_children":
            self.__dict__.setdefault("_children", {})[name] = value
        object.__setattr__(self, name, value)

    def add_param(self, name: str, value: np.ndarray) -> Tensor:
        t = parameter(value, name=name)
        self._params[name] = t
        object.__setattr__(self, name, t)
        return t

    def add_buffer(self, name: str, value: np.ndarray) -> np.ndarray:
        self._buffers[name] = value
        object.__setattr__(self, name, value)
        return value

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for k, v in self._params.items():
            yield prefix + k, v
        for name, child in self._children.items():
            yield from child.named_parameters(f"{prefix}{name}.")

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for k, v in self._buffers.items():
            yield prefix + k, v
        for name, child in self._children.items():
            yield from child.named_buffers(f"{prefix}{name}.")

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        for k, v in self.named_parameters():
            if k in out:
                raise ValueError(f"duplicate parameter name {k}")
            out[k] = v
        return out

    def parameter_count(self) -> int:
        return int(sum(p.data.size for p in self.parameters().values()))

    def train(self, mode: bool = True):
        self.training = mode
        for c in self._children.values():
            c.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {k: v.data.copy() for k, v in self.named_parameters()}
        state.update({k: np.array(v, copy=True) for k, v in self.named_buffers()})
        return state

    def load_state_dict(self, state: dict) -> None:
        params = dict(self.named_parameters())
        bufs = dict(self.named_buffers())
        missing = (set(params) | set(bufs)) - set(state)
        if missing:
            raise KeyError(f"state is missing {sorted(missing)}")
        for k, t in params.items():
            v = np.asarray(state[k])
            if v.shape != t.shape:
                raise ValueError(f"{k}: shape {v.shape} != {t.shape}")
            t.data = v.astype(t.dtype, copy=True)
        for k, b in bufs.items():
            b[...] = np.asarray(state[k], dtype=b.dtype)

    def astype(self, dtype):
        for _, t in self.named_parameters():
            t.data = t.data.astype(dtype)
        return self

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Conv1d(Module):
    def __init__(self, cin: int, cout: int, k: int, rng, stride: int = 1, padding: int = 0, bias: bool = True):
        super().__init__()
        self.stride, self.padding = stride, padding
        self.add_param("weight", kaiming_uniform(rng, (k, cin, cout), k * cin))
        self.bias = self.add_param("bias", np.zeros(cout)) if bias else None

    def forward(self, x):
        return F.conv1d(x, self.weight, self.bias, self.stride, self.padding)


class Conv2d(Module):
    def __init__(self, cin: int, cout: int, k: int, rng, stride: int = 1, padding: int = 0, bias: bool = True):
        super().__init__()
        self.stride, self.padding = stride, padding
        self.add_param("weight", kaiming_uniform(rng, (k, k, cin, cout), k * k * cin))
        self.bias = self.add_param("bias", np.zeros(cout)) if bias else None

    def forward(self, x):
        return F.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class Dense(Module):
    """1x1 convolution / fully connected map over the last axis."""

    def __init__(self, cin: int, cout: int, rng, bias: bool = True):
        super().__init__()
        self.add_param("weight", kaiming_uniform(rng, (cin, cout), cin))
        self.bias = self.add_param("bias", np.zeros(cout)) if bias else None

    def forward(self, x):
        return F.linear(x, self.weight, self.bias)


class BatchNorm(Module):
    def __init__(self, channels: int, momentum: float = 0.9, eps: float = 1e-5):
        super().__init__()
        self.momentum, self.eps = momentum, eps
        self.add_param("gamma", np.ones(channels))
        self.add_param("beta", np.zeros(channels))
        self.add_buffer("running_mean", np.zeros(channels))
        self.add_buffer("running_var", np.ones(channels))

    def forward(self, x):
        return F.batchnorm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                           self.training, self.momentum, self.eps)


class InputNorm(Module):
    """Fixed per-channel affine standardisation; identity until ``fit`` is called."""

    def __init__(self, channels: int):
        super().__init__()
        self.add_buffer("shift", np.zeros(channels))
        self.add_buffer("scale", np.ones(channels))

    def fit(self, x: np.ndarray) -> None:
        axes = tuple(range(x.ndim - 1))
        self.shift[...] = x.mean(axis=axes)
        std = x.std(axis=axes)
        self.scale[...] = 1.0 / np.where(std > 1e-12, std, 1.0)

    def forward(self, x: Tensor) -> Tensor:
        d = x.dtype
        return F.mul(F.add(x, -self.shift.astype(d)), self.scale.astype(d))
