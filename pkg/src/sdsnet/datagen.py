"""Synthetic cohorts with a planted temporal video cue and tunable SDS agreement.

Every subject draws from its own stream seeded by ``(seed, subject index)``,
so a cohort is byte-identical however its subjects are scheduled.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .ingest.preprocess import resize_bilinear
from .session import N_QUESTIONS, SDS_THRESHOLD, QuestionRecord, Session


class ConfigError(ValueError):
    pass


# log-normal response times; medians in seconds
MEDIAN_TIME = {0: 3.0, 1: 6.0}
SUBJECT_TIME_SIGMA = 0.5
QUESTION_TIME_SIGMA = 0.4
NOISE_SIGMA = 0.05
SIGNAL_CYCLES = 2.0


@dataclass
class GenSpec:
    n_subjects: int = 60
    prevalence: float = 0.5
    sds_agreement: float = 0.8
    signal_strength: float = 0.25
    frames_per_clip: int = 16
    clip_height: int = 32
    clip_width: int = 32
    seed: int = 0

    def validate(self) -> None:
        if self.n_subjects < 1:
            raise ConfigError("n_subjects must be positive")
        if not 0 <= self.prevalence <= 1:
            raise ConfigError("prevalence must lie in [0, 1]")
        if not 0 <= self.sds_agreement <= 1:
            raise ConfigError("sds_agreement must lie in [0, 1]")
        if not self.signal_strength >= 0:
            raise ConfigError("signal_strength must be >= 0")
        for name in ("frames_per_clip", "clip_height", "clip_width"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        return asdict(self)


CALIBRATED_SPEC = GenSpec(n_subjects=200, prevalence=0.47, sds_agreement=0.80, seed=7)


def _round(v: float) -> int:
    return int(math.floor(v + 0.5))


def class_counts(spec: GenSpec):
    """(normal, depressed, false-positive, false-negative) subject counts."""
    n1 = _round(spec.prevalence * spec.n_subjects)
    n0 = spec.n_subjects - n1
    fp = _round((1 - spec.sds_agreement) * n0)
    fn = _round((1 - spec.sds_agreement) * n1)
    return n0, n1, fp, fn


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def draw_answers(sds_positive: bool, rng: np.random.Generator) -> np.ndarray:
    """20 answers in 1..4 whose sum is >= 50 exactly when ``sds_positive``."""
    total = int(rng.integers(SDS_THRESHOLD, 63)) if sds_positive else int(rng.integers(30, SDS_THRESHOLD))
    # each item has three increments available on top of the base score 1
    slots = rng.choice(3 * N_QUESTIONS, size=total - N_QUESTIONS, replace=False)
    return 1 + np.bincount(slots // 3, minlength=N_QUESTIONS)


def base_texture(height: int, width: int, rng: np.random.Generator) -> np.ndarray:
    coarse = rng.uniform(0.3, 0.7, size=(4, 4))
    return resize_bilinear(coarse, (height, width))


def plant_signal(clip: np.ndarray, strength: float, rng: np.random.Generator) -> np.ndarray:
    """Add a periodic left/right intensity exchange to a ``[T, H, W]`` clip.

    Each left-half pixel gains ``strength * sin(2*pi*cycles*t/T + phase)`` and
    its mirror pixel in the right half loses the same amount. Transfers
    saturate pairwise so both pixels stay in [0, 1]; the per-frame spatial
    mean is therefore unchanged and only temporal structure carries the cue.
    """
    if strength < 0:
        raise ValueError("strength must be >= 0")
    phase = rng.uniform(0, 2 * np.pi)
    if strength == 0:
        return clip.copy()
    t, _, w = clip.shape
    half = w // 2
    x = clip.astype(np.float64)
    left = x[:, :, :half]
    right = x[:, :, w - 1 : w - 1 - half : -1] if half else x[:, :, :0]
    amp = strength * np.sin(2 * np.pi * SIGNAL_CYCLES * np.arange(t) / t + phase)[:, None, None]
    up = np.minimum(np.minimum(amp, 1 - left), right)
    down = np.maximum(np.maximum(amp, -left), right - 1)
    delta = np.where(amp >= 0, np.maximum(up, 0), np.minimum(down, 0))
    out = x.copy()
    out[:, :, :half] = left + delta
    out[:, :, w - 1 : w - 1 - half : -1] = right - delta
    return np.clip(out, 0, 1).astype(clip.dtype)


def response_times(label: int, rng: np.random.Generator) -> np.ndarray:
    subject_offset = rng.normal(0, SUBJECT_TIME_SIGMA)
    z = rng.normal(0, QUESTION_TIME_SIGMA, size=N_QUESTIONS)
    return np.exp(np.log(MEDIAN_TIME[label]) + subject_offset + z)


def generate_subject(spec: GenSpec, index: int, label: int, disagrees: bool) -> Session:
    rng = _rng(spec.seed, 1, index)
    answers = draw_answers(bool(label) != bool(disagrees), rng)
    times = response_times(label, rng)
    texture = base_texture(spec.clip_height, spec.clip_width, rng)
    questions = []
    for q in range(N_QUESTIONS):
        noise = rng.normal(0, NOISE_SIGMA, size=(spec.frames_per_clip, spec.clip_height, spec.clip_width))
        clip = np.clip(texture[None] + noise, 0, 1).astype(np.float32)
        planted = plant_signal(clip, spec.signal_strength, rng)
        # consume the same stream for both classes so only the label decides
        clip = planted if label == 1 else clip
        questions.append(QuestionRecord(answer=int(answers[q]), response_time_sec=float(times[q]), clip=clip))
    return Session(subject_id=f"S{index + 1:04d}", label=int(label), questions=questions)


def assign_labels(spec: GenSpec):
    """Per-subject ``(label, disagrees)`` arrays honouring prevalence and agreement."""
    n0, n1, fp, fn = class_counts(spec)
    rng = _rng(spec.seed, 0)
    labels = rng.permutation(np.r_[np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
    disagrees = np.zeros(spec.n_subjects, dtype=bool)
    for cls, k in ((0, fp), (1, fn)):
        members = np.flatnonzero(labels == cls)
        if k:
            disagrees[rng.choice(members, size=k, replace=False)] = True
    return labels, disagrees


def generate(spec: GenSpec) -> list:
    spec.validate()
    labels, disagrees = assign_labels(spec)
    return [generate_subject(spec, i, int(labels[i]), bool(disagrees[i])) for i in range(spec.n_subjects)]


def sds_confusion(sessions) -> dict:
    """SDS-threshold decision vs true label, keyed TN, FP, FN, TP."""
    counts = {"TN": 0, "FP": 0, "FN": 0, "TP": 0}
    for s in sessions:
        pred = int(s.sds_sum >= SDS_THRESHOLD)
        key = ("T" if pred == s.label else "F") + ("P" if pred else "N")
        counts[key] += 1
    return counts


def summary(sessions) -> dict:
    labels = [s.label for s in sessions]
    return {
        "n_subjects": len(sessions),
        "normal": labels.count(0),
        "depression": labels.count(1),
        "sds_confusion": sds_confusion(sessions),
    }
