"""Question-wise clip encoders: ``[N, T, H, W]`` clips to ``[N, feature_dim]``.

One encoder instance (one set of weights) serves all twenty questions; callers
batch every question clip through it in a single pass.
"""

from __future__ import annotations

import math

import numpy as np

from ..core import (
    Tensor,
    concat,
    conv3d,
    fully_connected,
    matmul,
    maxpool3d,
    relu,
    sigmoid,
    softmax,
    tanh,
)
from .config import CONV_KERNEL, FRAME_KERNEL, FRAME_STRIDE, ModelConfig
from .params import ParamStore


def _as_clip_batch(clips, cfg: ModelConfig) -> Tensor:
    x = clips if isinstance(clips, Tensor) else Tensor(np.asarray(clips, dtype=cfg.np_dtype))
    if x.ndim == 3:
        x = x.reshape((1,) + x.shape)
    expected = (cfg.frames,) + cfg.spatial
    if x.shape[1:] != expected:
        raise ValueError(f"clip dims {x.shape[1:]} do not match config {expected}")
    return x


class Q3DCNN:
    """Stacked 3x3x3 conv + 2x2x2 pool stages, a volume-collapsing conv, then FC."""

    def __init__(self, cfg: ModelConfig, store: ParamStore):
        self.cfg = cfg
        widths = cfg.channel_widths
        self.stages = []
        c_in = 1
        for i, c in enumerate(widths[:-1]):
            self.stages.append(store.conv(f"encoder.conv{i + 1}", c_in, c, CONV_KERNEL))
            c_in = c
        self.rounding = cfg.pool_rounding or (("floor",) * 3,) * len(self.stages)
        self.final = store.conv(f"encoder.conv{len(widths)}", c_in, widths[-1], cfg.final_kernel)
        self.fc = store.linear("encoder.fc", widths[-1], cfg.feature_dim)

    def __call__(self, clips, trace: list | None = None) -> Tensor:
        x = _as_clip_batch(clips, self.cfg)
        n = x.shape[0]
        h = x.reshape(n, 1, *x.shape[1:])
        if trace is not None:
            trace.append(("input", list(h.shape[1:])))
        for i, ((w, b), mode) in enumerate(zip(self.stages, self.rounding)):
            h = relu(conv3d(h, w, b, temporal_pad=1))
            if trace is not None:
                trace.append((f"conv{i + 1}", list(h.shape[1:])))
            h = maxpool3d(h, mode)
            if trace is not None:
                trace.append((f"pool{i + 1}", list(h.shape[1:])))
        h = relu(conv3d(h, *self.final))
        if trace is not None:
            trace.append((f"conv{len(self.stages) + 1}", list(h.shape[1:])))
        h = h.reshape(n, -1)
        if trace is not None:
            trace.append(("flatten", list(h.shape[1:])))
        out = relu(fully_connected(h, *self.fc))
        if trace is not None:
            trace.append(("fc", list(out.shape[1:])))
        return out


class FrameEncoder:
    """Two strided 2-D conv + ReLU stages applied to every frame independently."""

    def __init__(self, cfg: ModelConfig, store: ParamStore):
        self.cfg = cfg
        c1, c2 = cfg.channel_widths
        self.conv1 = store.conv("encoder.frame_conv1", 1, c1, FRAME_KERNEL)
        self.conv2 = store.conv("encoder.frame_conv2", c1, c2, FRAME_KERNEL)

    def __call__(self, x: Tensor) -> Tensor:
        n, t = x.shape[0], x.shape[1]
        h = x.reshape(n, 1, *x.shape[1:])
        h = relu(conv3d(h, *self.conv1, stride=FRAME_STRIDE))
        h = relu(conv3d(h, *self.conv2, stride=FRAME_STRIDE))
        # [N, C, T, h, w] -> [N, T, C*h*w]
        return h.transpose(0, 2, 1, 3, 4).reshape(n, t, -1)


def lstm_step(x_proj: Tensor, h: Tensor, c: Tensor, w_h: Tensor):
    """One LSTM step given the precomputed input projection ``x W_x^T + b``.

    Gate blocks are ordered (input, forget, candidate, output).
    """
    k = h.shape[-1]
    z = x_proj + matmul(h, w_h.transpose(1, 0))
    i = sigmoid(z[:, 0:k])
    f = sigmoid(z[:, k : 2 * k])
    g = tanh(z[:, 2 * k : 3 * k])
    o = sigmoid(z[:, 3 * k : 4 * k])
    c_new = f * c + i * g
    return o * tanh(c_new), c_new


class BiLSTM:
    def __init__(self, cfg: ModelConfig, store: ParamStore):
        self.cfg = cfg
        self.frames = FrameEncoder(cfg, store)
        d, k = cfg.frame_embedding_dim, cfg.hidden_dim
        self.directions = {}
        for name in ("fwd", "bwd"):
            w_x, b = store.linear(f"encoder.lstm_{name}.input", d, 4 * k)
            w_h = store.glorot(f"encoder.lstm_{name}.recurrent", (4 * k, k), k, 4 * k)
            self.directions[name] = (w_x, b, w_h)
        self.fc = store.linear("encoder.fc", 2 * k, cfg.feature_dim)

    def run(self, seq: Tensor, w_x, b, w_h, reverse: bool) -> Tensor:
        n, t = seq.shape[0], seq.shape[1]
        k = self.cfg.hidden_dim
        proj = fully_connected(seq, w_x, b)
        h = Tensor(np.zeros((n, k), dtype=seq.dtype))
        c = Tensor(np.zeros((n, k), dtype=seq.dtype))
        steps = range(t - 1, -1, -1) if reverse else range(t)
        for s in steps:
            h, c = lstm_step(proj[:, s], h, c, w_h)
        return h

    def __call__(self, clips) -> Tensor:
        x = _as_clip_batch(clips, self.cfg)
        seq = self.frames(x)
        h_f = self.run(seq, *self.directions["fwd"], reverse=False)
        h_b = self.run(seq, *self.directions["bwd"], reverse=True)
        return relu(fully_connected(concat([h_f, h_b], axis=-1), *self.fc))


class NonLocal:
    """Embedded-Gaussian self-attention over time with a residual connection."""

    def __init__(self, cfg: ModelConfig, store: ParamStore):
        self.cfg = cfg
        self.frames = FrameEncoder(cfg, store)
        d = cfg.hidden_dim
        self.inner = max(1, d // 2)
        self.embed = store.linear("encoder.embed", cfg.frame_embedding_dim, d)
        self.theta = store.linear("encoder.theta", d, self.inner)
        self.phi = store.linear("encoder.phi", d, self.inner)
        self.g = store.linear("encoder.g", d, self.inner)
        self.out = store.linear("encoder.out", self.inner, d)
        self.fc = store.linear("encoder.fc", d, cfg.feature_dim)

    def attention(self, x: Tensor) -> Tensor:
        """Row-stochastic ``[N, T, T]`` affinities for frame embeddings ``x``."""
        th = fully_connected(x, *self.theta)
        ph = fully_connected(x, *self.phi)
        logits = matmul(th, ph.transpose(0, 2, 1)) * (1.0 / math.sqrt(self.inner))
        return softmax(logits, axis=-1)

    def __call__(self, clips, keep: dict | None = None) -> Tensor:
        x = _as_clip_batch(clips, self.cfg)
        emb = relu(fully_connected(self.frames(x), *self.embed))
        attn = self.attention(emb)
        y = matmul(attn, fully_connected(emb, *self.g))
        z = emb + fully_connected(y, *self.out)
        if keep is not None:
            keep["attention"] = attn.data
        return relu(fully_connected(z.mean(axis=1), *self.fc))


def build_encoder(cfg: ModelConfig, store: ParamStore):
    if cfg.encoder == "q3dcnn":
        return Q3DCNN(cfg, store)
    if cfg.encoder == "bilstm":
        return BiLSTM(cfg, store)
    if cfg.encoder == "nonlocal":
        return NonLocal(cfg, store)
    return None

