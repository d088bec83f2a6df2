from __future__ import annotations

import math

import numpy as np

from ..core import Tensor


class ParamStore:
    """Ordered name -> Tensor mapping; creation order fixes the init draw order."""

    def __init__(self, rng: np.random.Generator, dtype):
        self.rng = rng
        self.dtype = dtype
        self.tensors: dict = {}

    def glorot(self, name: str, shape, fan_in: int, fan_out: int) -> Tensor:
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        t = Tensor(self.rng.uniform(-bound, bound, size=shape).astype(self.dtype), requires_grad=True)
        self.tensors[name] = t
        return t

    def zeros(self, name: str, shape) -> Tensor:
        t = Tensor(np.zeros(shape, dtype=self.dtype), requires_grad=True)
        self.tensors[name] = t
        return t

    def linear(self, prefix: str, n_in: int, n_out: int):
        return (
            self.glorot(f"{prefix}.weight", (n_out, n_in), n_in, n_out),
            self.zeros(f"{prefix}.bias", (n_out,)),
        )

    def conv(self, prefix: str, c_in: int, c_out: int, kernel):
        vol = int(np.prod(kernel))
        return (
            self.glorot(f"{prefix}.weight", (c_out, c_in, *kernel), c_in * vol, c_out * vol),
            self.zeros(f"{prefix}.bias", (c_out,)),
        )
