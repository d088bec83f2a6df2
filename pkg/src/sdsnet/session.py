"""Per-subject records shared by the generator, the store and the models."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

N_QUESTIONS = 20
SDS_THRESHOLD = 50


@dataclass
class QuestionRecord:
    answer: int
    response_time_sec: float
    clip: np.ndarray  # [T, H, W] grayscale in [0, 1]
    crop_box: Optional[tuple] = None

    def __post_init__(self):
        if self.answer not in (1, 2, 3, 4):
            raise ValueError(f"answer must be 1..4, got {self.answer}")
        if not self.response_time_sec > 0:
            raise ValueError(f"response time must be positive, got {self.response_time_sec}")


@dataclass
class Session:
    subject_id: str
    label: int
    questions: list = field(default_factory=list)

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")
        if len(self.questions) != N_QUESTIONS:
            raise ValueError(f"{self.subject_id}: expected {N_QUESTIONS} questions, got {len(self.questions)}")

    @property
    def answers(self) -> np.ndarray:
        return np.array([q.answer for q in self.questions], dtype=np.int64)

    @property
    def response_times(self) -> np.ndarray:
        return np.array([q.response_time_sec for q in self.questions], dtype=np.float64)

    @property
    def sds_sum(self) -> int:
        return int(self.answers.sum())

    def clips(self) -> np.ndarray:
        """All question clips stacked as [20, T, H, W]."""
        return np.stack([q.clip for q in self.questions])
