from .adam import AdamConfig, AdamState, adam_step
from .cv import (
    LEARNED,
    METHODS,
    SDS_SUM,
    CVResult,
    FoldResult,
    LeakageAudit,
    audit_leakage,
    cross_validate,
    method_config,
    method_label,
)
from .folds import FoldError, FoldPlan, fold_sizes, make_fold_plan
from .metrics import METRICS, Confusion, confusion, mean_std
from .report import CSV_COLUMNS, to_csv, to_table, write_report
from .train import TrainConfig, TrainingDiverged, TrainLog, TrainResult, evaluate, evaluate_sds_sum, subset, train
