"""The gradient-check suite: every differentiable op plus the tiny-preset pipelines.

Each case rebuilds its graph from float64 parameters and is compared against
central differences by :func:`sdsnet.core.grad_check`.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .core import (
    Tensor,
    bce_loss,
    concat,
    conv3d,
    fully_connected,
    grad_check,
    matmul,
    maxpool3d,
    relu,
    sigmoid,
    softmax,
    tanh,
)

TOLERANCE = 1e-4

# name -> (loss builder over the input tensors, input shapes)
OP_CASES = {
    "add_broadcast": (lambda a, b: ((a + b) * a).sum(), [(3, 4), (4,)]),
    "sub_div": (lambda a, b: ((a - b) / (b * b + 1.0)).sum(), [(3, 4), (3, 4)]),
    "exp_log": (lambda a: ((a * a + 1.0).log() + (a * 0.5).exp()).sum(), [(5,)]),
    "power": (lambda a: ((a * a + 1.0) ** 1.5).sum(), [(4,)]),
    "relu": (lambda a: (relu(a) * a).sum(), [(4, 3)]),
    "sigmoid": (lambda a: (sigmoid(a) * a).sum(), [(6,)]),
    "tanh": (lambda a: (tanh(a) * a).sum(), [(6,)]),
    "softmax": (lambda a: (softmax(a, axis=-1) * a).sum(), [(3, 5)]),
    "sum_mean_axis": (lambda a: (a.sum(axis=0) * a.mean(axis=1).sum()).sum(), [(3, 4)]),
    "matmul_batched": (lambda a, b: (matmul(a, b) ** 2).sum(), [(2, 3, 4), (4, 5)]),
    "fully_connected": (lambda x, w, b: (fully_connected(x, w, b) ** 2).sum(), [(2, 4), (3, 4), (3,)]),
    "reshape_transpose_getitem": (
        lambda a: (a.transpose(1, 0)[1:3] * a.reshape(4, 3)[0:2]).sum(),
        [(3, 4)],
    ),
    "concat": (lambda a, b: (concat([a, b], axis=1) ** 2).mean(), [(2, 3), (2, 2)]),
    "conv3d": (lambda x, k, b: (conv3d(x, k, b, temporal_pad=1) ** 2).sum(), [(2, 3, 4, 4), (2, 2, 3, 2, 2), (2,)]),
    "conv3d_strided": (lambda x, k: (conv3d(x, k, None, stride=(1, 2, 2)) ** 2).sum(), [(2, 2, 5, 5), (2, 2, 1, 3, 3)]),
    "maxpool3d_floor": (lambda x: (maxpool3d(x) ** 2).sum(), [(2, 4, 5, 4)]),
    "maxpool3d_ceil": (lambda x: (maxpool3d(x, ("ceil", "floor", "ceil")) ** 2).sum(), [(2, 3, 4, 5)]),
    "bce_loss": (lambda p: bce_loss(sigmoid(p), np.array([1.0, 0.0, 1.0])), [(3,)]),
}

PIPELINE_ENCODERS = ("q3dcnn", "bilstm", "nonlocal")
# Absolute scale below which gradient entries are compared absolutely; the
# pipeline loss sums ~10^5 terms, so central-difference roundoff sits near 1e-11.
PIPELINE_FLOOR = 1e-6
# Finer steps retried where ReLU or max-pool switches fall inside the stencil.
PIPELINE_REFINE = (1e-6, 1e-7)


@dataclass
class CaseResult:
    name: str
    max_rel_error: float
    passed: bool
    lines: list


def _seed(name: str) -> int:
    return zlib.crc32(name.encode())


def check_op(name: str, tolerance: float = TOLERANCE) -> CaseResult:
    fn, shapes = OP_CASES[name]
    rng = np.random.default_rng(_seed(name))
    inputs = {f"x{i}": Tensor(rng.uniform(-1, 1, s), requires_grad=True) for i, s in enumerate(shapes)}
    report = grad_check(lambda: fn(*inputs.values()), inputs, tolerance=tolerance)
    return CaseResult(name, report.max_rel_error, report.passed, report.lines())


def check_pipeline(encoder: str, tolerance: float = TOLERANCE, max_entries: int = 4, seed: int = 0) -> CaseResult:
    """Full model (encoder, fusion, sigmoid, BCE) at the tiny preset in float64.

    One synthetic subject per class; ``max_entries`` entries per parameter
    tensor are sampled for the finite-difference side.
    """
    from .datagen import GenSpec, generate
    from .models import Batch, ModelConfig, ScreeningModel

    cfg = ModelConfig.tiny(encoder=encoder, dtype="f64")
    sessions = generate(GenSpec(n_subjects=2, prevalence=0.5, signal_strength=0.3, seed=seed))
    batch = Batch.from_sessions(sessions, dtype=np.float64)
    rng = np.random.default_rng(seed + 1)
    # Saturated pixels (exact 0 or 1) make exactly tied max-pool windows, where
    # the loss has a corner and only a subgradient exists; jitter breaks ties.
    batch.clips = batch.clips + rng.uniform(0, 1e-3, batch.clips.shape)
    model = ScreeningModel(cfg, seed=seed)
    # small nonzero biases keep ReLUs away from the exact kink at 0
    for name, t in model.params.items():
        if name.endswith(".bias"):
            t.data = rng.uniform(0.01, 0.05, t.shape)

    def loss():
        return bce_loss(model(batch), batch.labels)

    report = grad_check(
        loss,
        model.params,
        tolerance=tolerance,
        max_entries=max_entries,
        seed=seed,
        floor=PIPELINE_FLOOR,
        refine=PIPELINE_REFINE,
    )
    return CaseResult(f"pipeline[{encoder}]", report.max_rel_error, report.passed, report.lines())


def run_suite(tolerance: float = TOLERANCE, pipelines=PIPELINE_ENCODERS, max_entries: int = 4) -> list:
    results = [check_op(name, tolerance) for name in OP_CASES]
    results += [check_pipeline(enc, tolerance, max_entries) for enc in pipelines]
    return results
