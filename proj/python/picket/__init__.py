"""Self-supervised guard for tabular machine learning pipelines."""

from ._picket import (
    Dataset,
    DownstreamModel,
    GuardBundle,
    PicketNet,
    attack_row,
    auroc,
    corrupt,
    f1_score,
    kept_indices,
    run_experiment,
    synth_gaussian_linear,
    synth_labeled_task,
    thresholds_by_fpr,
)

__all__ = [
    "Dataset",
    "DownstreamModel",
    "GuardBundle",
    "PicketNet",
    "attack_row",
    "auroc",
    "corrupt",
    "f1_score",
    "kept_indices",
    "run_experiment",
    "synth_gaussian_linear",
    "synth_labeled_task",
    "thresholds_by_fpr",
]
