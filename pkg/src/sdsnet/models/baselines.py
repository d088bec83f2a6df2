import numpy as np

from ..session import N_QUESTIONS, SDS_THRESHOLD


def sds_sum_baseline(answers) -> int:
    """1 (depression) iff the 20 SDS answers sum to at least 50."""
    answers = np.asarray(answers)
    if answers.shape != (N_QUESTIONS,):
        raise ValueError(f"expected {N_QUESTIONS} answers, got shape {answers.shape}")
    if answers.min() < 1 or answers.max() > 4:
        raise ValueError("answers must lie in 1..4")
    return int(answers.sum() >= SDS_THRESHOLD)


def decide(p) -> int:
    """Screening decision at the 0.5 threshold; an exact tie counts as healthy."""
    return int(float(p) > 0.5)


def decide_all(p) -> np.ndarray:
    return (np.asarray(p) > 0.5).astype(np.int64)
