"""Analytic vs central-difference gradient comparison."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .tensor import Tensor, no_grad


@dataclass
class ParamCheck:
    name: str
    checked: int
    max_rel_error: float
    worst_index: tuple

    def passed(self, tolerance: float) -> bool:
        return self.max_rel_error < tolerance


@dataclass
class GradCheckReport:
    tolerance: float
    params: list = field(default_factory=list)

    @property
    def failures(self) -> list:
        return [p for p in self.params if not p.passed(self.tolerance)]

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def max_rel_error(self) -> float:
        return max((p.max_rel_error for p in self.params), default=0.0)

    def lines(self) -> list:
        out = []
        for p in self.params:
            status = "ok  " if p.passed(self.tolerance) else "FAIL"
            out.append(f"{status} {p.name:<28s} n={p.checked:<5d} max_rel_err={p.max_rel_error:.3e}")
        return out


def relative_error(analytic, numeric, floor: float = 1e-8):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def grad_check(
    loss_fn: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    tolerance: float = 1e-4,
    h: float = 1e-5,
    max_entries: int | None = None,
    seed: int = 0,
    floor: float = 1e-8,
    refine: Sequence[float] = (),
) -> GradCheckReport:
    """Compare backprop gradients of ``loss_fn()`` with central differences.

    ``loss_fn`` must rebuild the graph from the current contents of
    ``params`` on every call. When ``max_entries`` is set, that many entries
    per parameter are sampled (seeded) instead of checking all of them.

    Entries not well inside ``tolerance`` at step ``h`` are retried at each
    step in ``refine`` and keep the best agreement. A kink (ReLU, max-pool switch)
    inside the stencil is an artefact that shrinks with the step; a wrong
    backward disagrees at every step.
    """
    for p in params.values():
        if p.dtype != np.float64:
            raise TypeError("gradient checks need float64 parameters")
        p.zero_grad()
    loss = loss_fn()
    loss.backward()
    analytic = {name: (p.grad if p.grad is not None else np.zeros_like(p.data)) for name, p in params.items()}

    rng = np.random.default_rng(seed)
    report = GradCheckReport(tolerance=tolerance)
    with no_grad():
        for name, p in params.items():
            flat = p.data.reshape(-1)
            idx = np.arange(flat.size)
            if max_entries is not None and flat.size > max_entries:
                idx = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
            a_flat = analytic[name].reshape(-1)
            errs = np.empty(idx.size)
            for k, i in enumerate(idx):
                best = np.inf
                for step in (h, *refine):
                    orig = flat[i]
                    flat[i] = orig + step
                    up = loss_fn().item()
                    flat[i] = orig - step
                    down = loss_fn().item()
                    flat[i] = orig
                    best = min(best, float(relative_error(a_flat[i], (up - down) / (2 * step), floor)))
                    if best < 1e-2 * tolerance:
                        break
                errs[k] = best
            worst = int(np.argmax(errs)) if errs.size else 0
            report.params.append(
                ParamCheck(
                    name=name,
                    checked=int(idx.size),
                    max_rel_error=float(errs.max()) if errs.size else 0.0,
                    worst_index=np.unravel_index(int(idx[worst]), p.shape) if idx.size else (),
                )
            )
    return report
