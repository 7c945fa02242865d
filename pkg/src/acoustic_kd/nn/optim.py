from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .tensor import Tensor


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


class Adam:
    """Bias-corrected Adam. Parameters are updated in place."""

    def __init__(self, params: Mapping[str, Tensor], lr: float = 1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = dict(params)
        self.state = AdamState(lr, beta1, beta2, eps)
        for k, p in self.params.items():
            self.state.m[k] = np.zeros_like(p.data)
            self.state.v[k] = np.zeros_like(p.data)

    def step(self, grads: Mapping[str, np.ndarray]) -> None:
        s = self.state
        s.step += 1
        t = s.step
        c1 = 1.0 - s.beta1**t
        c2 = 1.0 - s.beta2**t
        for k, p in self.params.items():
            g = grads[k]
            if g.shape != p.shape:
                raise ValueError(f"gradient for {k} has shape {g.shape}, parameter {p.shape}")
            m, v = s.m[k], s.v[k]
            m *= s.beta1
            m += (1 - s.beta1) * g
            v *= s.beta2
            v += (1 - s.beta2) * g * g
            p.data = p.data - (s.learning_rate * (m / c1) / (np.sqrt(v / c2) + s.eps)).astype(p.dtype)
