"""Five-fold cross-validation over subjects, repeated per seed."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from ..models import Batch, ModelConfig
from .folds import FoldPlan, make_fold_plan
from .metrics import METRICS, Confusion, mean_std
from .train import TrainConfig, evaluate, evaluate_sds_sum, train

SDS_SUM = "sds_sum"
# method key -> (encoder, uses answers/times)
LEARNED = {
    "sds_only": ("none", True),
    "q3dcnn": ("q3dcnn", True),
    "bilstm": ("bilstm", True),
    "nonlocal": ("nonlocal", True),
    "video_q3dcnn": ("q3dcnn", False),
    "video_bilstm": ("bilstm", False),
    "video_nonlocal": ("nonlocal", False),
}
METHODS = (SDS_SUM, *LEARNED)


def method_config(method: str, base: ModelConfig) -> ModelConfig:
    """Model config for a learned ``method`` at the scale of ``base``."""
    if method not in LEARNED:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    encoder, with_sds = LEARNED[method]
    d = base.to_dict()
    d.update(encoder=encoder, use_sds=with_sds, use_time=with_sds)
    if encoder in ("bilstm", "nonlocal") and base.encoder not in ("bilstm", "nonlocal"):
        # frame encoders take two conv widths; reuse the base scale's first two
        d.update(channel_widths=list(base.channel_widths[:2]), pool_rounding=None)
    return ModelConfig.from_dict(d)


def method_label(method: str, base: ModelConfig) -> str:
    if method == SDS_SUM:
        return "[SDS only]sum"
    return method_config(method, base).method_name


@dataclass
class FoldResult:
    method: str
    fold: int
    seed: int
    confusion: Confusion


@dataclass
class CVResult:
    method: str
    label: str
    plan: FoldPlan
    seeds: tuple
    folds: list = field(default_factory=list)  # FoldResult, ordered by (seed, fold)
    logs: list = field(default_factory=list)  # TrainLog per (seed, fold); empty for sds_sum

    def pooled(self, seed: int) -> Confusion:
        total = Confusion()
        for r in self.folds:
            if r.seed == seed:
                total = total + r.confusion
        return total

    def summary(self) -> dict:
        """metric -> (mean, std) over seeds of fold-pooled metrics."""
        per_seed = [self.pooled(s).metrics() for s in self.seeds]
        return {m: mean_std(d[m] for d in per_seed) for m in METRICS}


@dataclass
class LeakageAudit:
    fold: int
    seed: int
    held_out: int
    trained_on: int
    overlap: tuple

    @property
    def clean(self) -> bool:
        return not self.overlap


def audit_leakage(result: CVResult) -> list:
    """For every training run, intersect the logged batch subjects with the held-out fold."""
    audits = []
    for log in result.logs:
        held = set(result.plan.test_ids(log.held_out))
        seen = log.subjects_seen
        audits.append(LeakageAudit(log.held_out, log.seed, len(held), len(seen), tuple(sorted(held & seen))))
    return audits


def _run_one(args) -> tuple:
    data, plan, fold, cfg, train_cfg, seed = args
    res = train(data, plan, fold, cfg, train_cfg, seed)
    conf, _ = evaluate(res.model, data, plan.test_ids(fold))
    return conf, res.log


_WORKER_DATA: dict = {}


def _init_worker(data, plan):
    _WORKER_DATA["data"] = data
    _WORKER_DATA["plan"] = plan


def _run_in_worker(args) -> tuple:
    fold, cfg, train_cfg, seed = args
    return _run_one((_WORKER_DATA["data"], _WORKER_DATA["plan"], fold, cfg, train_cfg, seed))


def cross_validate(
    data: Batch,
    method: str,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    plan: FoldPlan | None = None,
    jobs: int = 1,
    progress=None,
) -> CVResult:
    """Train/evaluate ``method`` on every (seed, fold) pair.

    The fold plan is shared by all seeds and all methods, so methods are
    compared on the same held-out subjects. Results are ordered by
    ``(seed, fold)`` whatever ``jobs`` is.
    """
    if plan is None:
        plan = make_fold_plan(data.subject_ids, data.labels, seed=train_cfg.fold_seed)
    seeds = train_cfg.seeds
    pairs = [(seed, fold) for seed in seeds for fold in range(plan.n_folds)]
    result = CVResult(method, method_label(method, model_cfg), plan, seeds)
    if method == SDS_SUM:
        for seed, fold in pairs:
            result.folds.append(FoldResult(method, fold, seed, evaluate_sds_sum(data, plan.test_ids(fold))))
        return result

    cfg = method_config(method, model_cfg)
    if cfg.encoder != "none" and data.clips is None:
        raise ValueError(f"method {method} needs clips")
    if jobs > 1:
        tasks = [(fold, cfg, train_cfg, seed) for seed, fold in pairs]
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(data, plan)) as pool:
            outcomes = list(pool.map(_run_in_worker, tasks))
    else:
        outcomes = []
        for seed, fold in pairs:
            outcomes.append(_run_one((data, plan, fold, cfg, train_cfg, seed)))
            if progress is not None:
                progress(method, seed, fold, outcomes[-1][0])
    for (seed, fold), (conf, log) in zip(pairs, outcomes):
        result.folds.append(FoldResult(method, fold, seed, conf))
        result.logs.append(log)
    return result
