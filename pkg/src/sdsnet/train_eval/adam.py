"""Adam with bias correction, updating parameter tensors in place."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import NumericError


@dataclass
class AdamConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def validate(self) -> None:
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if not (self.lr > 0 and self.eps > 0):
            raise ValueError("lr and eps must be positive")


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict, grads: dict, state: AdamState, t: int, cfg: AdamConfig) -> None:
    """One update at step ``t`` (1-based) for every name in ``grads``.

    Parameters absent from ``grads`` are left untouched. Raises
    :class:`NumericError` naming the parameter if any gradient is non-finite,
    before anything is modified.
    """
    if t < 1:
        raise ValueError("Adam step counter starts at 1")
    for name, g in grads.items():
        if name not in params:
            raise KeyError(f"gradient for unknown parameter {name!r}")
        if g.shape != params[name].shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != parameter shape {params[name].shape}")
        if not np.isfinite(g).all():
            bad = int(np.size(g) - np.isfinite(g).sum())
            raise NumericError(f"non-finite gradient in {name} ({bad} entries) at step {t}")
    c1 = 1.0 - cfg.beta1**t
    c2 = 1.0 - cfg.beta2**t
    for name, g in grads.items():
        p = params[name]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * (g * g)
        p.data -= (cfg.lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)).astype(p.dtype, copy=False)
    state.t = t
