from .metrics import (
    MetricError,
    auc_score,
    average_precision,
    mae,
    metrics_suite,
    rmse,
    task_for_link,
)
from .experiments import (
    ExperimentError,
    adding_experiment,
    kernel_shap_method,
    masking_experiment,
    random_attribution_method,
    self_attribution_method,
    subset_size_eval,
    timing_experiment,
    timing_kernel_shap,
    timing_self_attribution,
)
from .report import (
    attribution_bar_svg,
    attribution_scatter_svg,
    emit_report,
    write_csv,
)

__all__ = [
    "MetricError", "auc_score", "average_precision", "mae", "metrics_suite", "rmse",
    "task_for_link",
    "ExperimentError", "adding_experiment", "kernel_shap_method", "masking_experiment",
    "random_attribution_method", "self_attribution_method", "subset_size_eval",
    "timing_experiment", "timing_kernel_shap", "timing_self_attribution",
    "attribution_bar_svg", "attribution_scatter_svg", "emit_report", "write_csv",
]
