"""Mini-batch training over whole subjects and held-out evaluation."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..core import NumericError, bce_loss
from ..models import Batch, ModelConfig, ScreeningModel, decide_all, sds_sum_baseline
from .adam import AdamConfig, AdamState, adam_step
from .folds import FoldPlan
from .metrics import Confusion, confusion


class TrainingDiverged(NumericError):
    def __init__(self, message: str, last_finite_epoch: int):
        super().__init__(f"{message}; last finite epoch: {last_finite_epoch}")
        self.last_finite_epoch = last_finite_epoch


@dataclass
class TrainConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 2
    epochs: int = 200
    seeds: tuple = (0, 1, 2, 3, 4)
    # parameter-name prefixes excluded from updates
    freeze: tuple = ()
    fold_seed: int = 0

    def __post_init__(self):
        self.seeds = tuple(int(s) for s in self.seeds)
        self.freeze = tuple(self.freeze)
        self.validate()

    def validate(self) -> None:
        self.adam().validate()
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not self.seeds:
            raise ValueError("at least one seed is required")

    @classmethod
    def tiny(cls, **overrides) -> "TrainConfig":
        return cls(**{"epochs": 30, **overrides})

    def adam(self) -> AdamConfig:
        return AdamConfig(self.lr, self.beta1, self.beta2, self.eps)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        d["freeze"] = list(self.freeze)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown train keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainLog:
    held_out: int
    seed: int
    epoch_losses: list = field(default_factory=list)
    # subject ids of every training batch, in update order
    batches: list = field(default_factory=list)

    @property
    def subjects_seen(self) -> set:
        return {s for b in self.batches for s in b}


@dataclass
class TrainResult:
    model: ScreeningModel
    log: TrainLog


def subset(data: Batch, rows) -> Batch:
    rows = np.asarray(rows, dtype=np.int64)
    return Batch(
        clips=None if data.clips is None else data.clips[rows],
        answers=data.answers[rows],
        times=data.times[rows],
        labels=data.labels[rows],
        subject_ids=[data.subject_ids[i] for i in rows],
    )


def rows_of(data: Batch, subject_ids) -> np.ndarray:
    index = {s: i for i, s in enumerate(data.subject_ids)}
    return np.array([index[s] for s in subject_ids], dtype=np.int64)


def shuffle_rng(seed: int, held_out: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(held_out,)))


def train(
    data: Batch,
    plan: FoldPlan,
    held_out: int,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    seed: int,
) -> TrainResult:
    """Fit one model on every fold except ``held_out``.

    Each update minimises the mean cross-entropy over ``batch_size`` whole
    subjects (all twenty clips each). The held-out subjects are never
    indexed here.
    """
    train_rows = rows_of(data, plan.train_ids(held_out))
    model = ScreeningModel(model_cfg, seed=seed)
    trainable = {k: p for k, p in model.params.items() if not any(k.startswith(f) for f in train_cfg.freeze)}
    rng = shuffle_rng(seed, held_out)
    adam_cfg = train_cfg.adam()
    state = AdamState()
    log = TrainLog(held_out=held_out, seed=seed)
    step = 0
    for epoch in range(1, train_cfg.epochs + 1):
        order = train_rows[rng.permutation(train_rows.size)]
        total = []
        for start in range(0, order.size, train_cfg.batch_size):
            rows = order[start : start + train_cfg.batch_size]
            batch = subset(data, rows)
            log.batches.append(list(batch.subject_ids))
            try:
                loss = bce_loss(model(batch), batch.labels)
                model.zero_grad()
                loss.backward()
                step += 1
                grads = {k: p.grad for k, p in trainable.items() if p.grad is not None}
                adam_step(trainable, grads, state, step, adam_cfg)
            except NumericError as exc:
                raise TrainingDiverged(f"epoch {epoch}: {exc}", epoch - 1) from exc
            total.append(loss.item() * len(rows))
        epoch_loss = math.fsum(total) / order.size
        if not math.isfinite(epoch_loss):
            raise TrainingDiverged(f"epoch {epoch}: loss is {epoch_loss}", epoch - 1)
        log.epoch_losses.append(epoch_loss)
    return TrainResult(model, log)


def evaluate(model: ScreeningModel, data: Batch, subject_ids) -> tuple:
    """(confusion, probabilities) of ``model`` on the given subjects."""
    sub = subset(data, rows_of(data, subject_ids))
    p = model.predict_proba(sub)
    return confusion(sub.labels, decide_all(p)), p


def evaluate_sds_sum(data: Batch, subject_ids) -> Confusion:
    sub = subset(data, rows_of(data, subject_ids))
    preds = [sds_sum_baseline(a) for a in sub.answers]
    return confusion(sub.labels, preds)
