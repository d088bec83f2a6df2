"""Subject-level k-fold partitions, stratified by label."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N_FOLDS = 5


class FoldError(ValueError):
    pass


def fold_sizes(n: int, k: int = N_FOLDS) -> list:
    """Sizes of ``k`` folds over ``n`` subjects, differing by at most one."""
    if n < k:
        raise FoldError(f"need at least {k} subjects for {k} folds, got {n}")
    return [n // k + (1 if i < n % k else 0) for i in range(k)]


@dataclass
class FoldPlan:
    assignment: dict  # subject_id -> fold index
    n_folds: int = N_FOLDS

    def __post_init__(self):
        folds = set(self.assignment.values())
        if not folds <= set(range(self.n_folds)):
            raise FoldError(f"fold indices must lie in 0..{self.n_folds - 1}")
        sizes = [len(self.members(f)) for f in range(self.n_folds)]
        if min(sizes) == 0 or max(sizes) - min(sizes) > 1:
            raise FoldError(f"fold sizes must be non-empty and differ by at most one, got {sizes}")

    def members(self, fold: int) -> list:
        return sorted(s for s, f in self.assignment.items() if f == fold)

    def train_ids(self, held_out: int) -> list:
        return sorted(s for s, f in self.assignment.items() if f != held_out)

    def test_ids(self, held_out: int) -> list:
        return self.members(held_out)

    def sizes(self) -> list:
        return [len(self.members(f)) for f in range(self.n_folds)]


def make_fold_plan(subject_ids, labels, n_folds: int = N_FOLDS, seed: int = 0) -> FoldPlan:
    """Shuffle each class with a seeded generator, then deal subjects round-robin.

    Dealing continues across classes, so fold sizes differ by at most one and
    each fold gets a near-equal share of both labels.
    """
    subject_ids = list(subject_ids)
    labels = np.asarray(labels)
    if len(set(subject_ids)) != len(subject_ids):
        raise FoldError("subject ids must be unique")
    if len(subject_ids) != len(labels):
        raise FoldError("one label per subject required")
    fold_sizes(len(subject_ids), n_folds)
    rng = np.random.default_rng(seed)
    assignment = {}
    i = 0
    for cls in sorted(set(labels.tolist())):
        members = [s for s, y in zip(subject_ids, labels) if y == cls]
        for j in rng.permutation(len(members)):
            assignment[members[j]] = i % n_folds
            i += 1
    return FoldPlan(assignment, n_folds)
