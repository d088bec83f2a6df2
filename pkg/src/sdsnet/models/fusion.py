"""Question-wise conditional fusion and the full screening model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import Tensor, concat, fully_connected, no_grad, relu, sigmoid
from ..ingest.binary import clip_as_float
from ..ingest.preprocess import one_hot_answers
from ..session import N_QUESTIONS
from .config import ModelConfig
from .encoders import build_encoder
from .params import ParamStore


@dataclass
class Batch:
    """Model inputs for B subjects."""

    clips: np.ndarray  # [B, 20, T, H, W]
    answers: np.ndarray  # [B, 20] in 1..4
    times: np.ndarray  # [B, 20] seconds
    labels: np.ndarray  # [B]
    subject_ids: list

    @classmethod
    def from_sessions(cls, sessions, dtype=np.float32, with_clips: bool = True) -> "Batch":
        clips = None
        if with_clips:
            clips = np.stack([np.stack([clip_as_float(q.clip) for q in s.questions]) for s in sessions]).astype(
                dtype, copy=False
            )
        return cls(
            clips=clips,
            answers=np.stack([s.answers for s in sessions]),
            times=np.stack([s.response_times for s in sessions]),
            labels=np.array([s.label for s in sessions], dtype=np.int64),
            subject_ids=[s.subject_id for s in sessions],
        )

    def __len__(self):
        return len(self.subject_ids)


class FusionHead:
    """Concatenate per-question ``[a_q, s_q, t_q]`` then FC+ReLU stack to one logit."""

    def __init__(self, cfg: ModelConfig, store: ParamStore):
        self.cfg = cfg
        dims = [N_QUESTIONS * cfg.question_dim, *cfg.fusion_hidden, 1]
        self.layers = [store.linear(f"fusion.fc{i + 1}", a, b) for i, (a, b) in enumerate(zip(dims[:-1], dims[1:]))]

    def question_features(self, video: Tensor, answers, times) -> Tensor:
        """``[B, 20, feature_dim + 5]`` per-question representations."""
        cfg = self.cfg
        dt = cfg.np_dtype
        s = one_hot_answers(answers, dtype=dt)
        t = np.asarray(times, dtype=dt)[..., None]
        if len(s.shape) != 3 or s.shape[1] != N_QUESTIONS:
            raise ValueError(f"expected answers for exactly {N_QUESTIONS} questions, got shape {np.shape(answers)}")
        # disabled modalities keep their slots, filled with zeros
        if not cfg.use_sds:
            s = np.zeros_like(s)
        if not cfg.use_time:
            t = np.zeros_like(t)
        return concat([video, Tensor(s), Tensor(t)], axis=-1)

    def logit(self, q_feats: Tensor) -> Tensor:
        if q_feats.shape[1] != N_QUESTIONS:
            raise ValueError(f"expected {N_QUESTIONS} question features, got {q_feats.shape[1]}")
        h = q_feats.reshape(q_feats.shape[0], -1)
        for i, (w, b) in enumerate(self.layers):
            h = fully_connected(h, w, b)
            if i < len(self.layers) - 1:
                h = relu(h)
        return h.reshape(-1)


class ScreeningModel:
    """Shared question encoder + conditional fusion head, ending in a sigmoid."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg
        store = ParamStore(np.random.default_rng(seed), cfg.np_dtype)
        self.encoder = build_encoder(cfg, store)
        self.head = FusionHead(cfg, store)
        self.params: dict = store.tensors

    def encode(self, clips: np.ndarray) -> Tensor:
        """``[B, 20, T, H, W]`` -> ``[B, 20, feature_dim]`` with one weight set."""
        b = clips.shape[0]
        if self.encoder is None:
            return Tensor(np.zeros((b, N_QUESTIONS, self.cfg.feature_dim), dtype=self.cfg.np_dtype))
        flat = np.asarray(clips, dtype=self.cfg.np_dtype).reshape(b * N_QUESTIONS, *clips.shape[2:])
        return self.encoder(flat).reshape(b, N_QUESTIONS, self.cfg.feature_dim)

    def forward(self, batch: Batch) -> Tensor:
        """Depression probabilities ``p`` of shape ``[B]``."""
        if self.encoder is None:
            video = Tensor(np.zeros((len(batch), N_QUESTIONS, self.cfg.feature_dim), dtype=self.cfg.np_dtype))
        elif batch.clips is None:
            raise ValueError("batch has no clips but the model has a video encoder")
        else:
            video = self.encode(batch.clips)
        return sigmoid(self.head.logit(self.head.question_features(video, batch.answers, batch.times)))

    __call__ = forward

    def predict_proba(self, batch: Batch, chunk: int = 8) -> np.ndarray:
        out = []
        with no_grad():
            for i in range(0, len(batch), chunk):
                sub = Batch(
                    clips=None if batch.clips is None else batch.clips[i : i + chunk],
                    answers=batch.answers[i : i + chunk],
                    times=batch.times[i : i + chunk],
                    labels=batch.labels[i : i + chunk],
                    subject_ids=batch.subject_ids[i : i + chunk],
                )
                out.append(self.forward(sub).data)
        return np.concatenate(out) if out else np.zeros(0)

    def state_dict(self) -> dict:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state: dict) -> None:
        missing = set(self.params) - set(state)
        extra = set(state) - set(self.params)
        if missing or extra:
            raise ValueError(f"checkpoint mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for k, t in self.params.items():
            arr = np.asarray(state[k])
            if arr.shape != t.shape:
                raise ValueError(f"{k}: checkpoint shape {arr.shape} != model shape {t.shape}")
            t.data = arr.astype(t.dtype, copy=True)

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.zero_grad()
