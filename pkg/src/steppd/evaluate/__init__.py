from .metrics import (
    METRICS,
    accuracy,
    average_precision,
    compute_metrics,
    confusion_matrix,
    f1_score,
    macro_f1,
    mcc,
    normalize_rows,
    roc_auc,
    summarize_folds,
)
from .search import (
    FittedPipeline,
    GridSpec,
    ModelEvaluation,
    evaluate_model,
    fit_pipeline,
    grid_search,
    make_splits,
    oof_confusion,
)
from .splits import (
    grouped_kfold,
    stratified_fold_ids,
    stratified_holdout,
    stratified_kfold,
)
from .tasks import BINARY_TASKS, TASKS, TaskSpec, get_task

__all__ = [
    "BINARY_TASKS",
    "FittedPipeline",
    "GridSpec",
    "METRICS",
    "ModelEvaluation",
    "TASKS",
    "TaskSpec",
    "accuracy",
    "average_precision",
    "compute_metrics",
    "confusion_matrix",
    "evaluate_model",
    "f1_score",
    "fit_pipeline",
    "get_task",
    "grid_search",
    "grouped_kfold",
    "macro_f1",
    "make_splits",
    "mcc",
    "normalize_rows",
    "oof_confusion",
    "roc_auc",
    "stratified_fold_ids",
    "stratified_holdout",
    "stratified_kfold",
    "summarize_folds",
]
