"""Fine-label training, coarse-label evaluation, and the average confusion ratio."""

from .data import Dataset, NoiseConfig, SyntheticSpec, generate_synthetic, inject_label_noise, stratified_subsample, train_test_split
from .experiment import PairResult, SweepResult, correlate_acr_delta, run_capacity_controls, run_granularity_pair
from .hierarchy import LabelHierarchy, PartitionAssignment, load_hierarchy, map_fine_to_coarse, repartition, restrict_coarse, same_coarse
from .metrics import AcrReport, ConfusionMatrix, DegenerateConfusion, StructureError, acr, build_confusion, coarse_accuracy, delta_a, fine_accuracy
from .trainer import Model, ModelConfig, TrainConfig, TrainingCurves, init_model, predict, train

__all__ = [
    "AcrReport",
    "ConfusionMatrix",
    "Dataset",
    "DegenerateConfusion",
    "LabelHierarchy",
    "Model",
    "ModelConfig",
    "NoiseConfig",
    "PairResult",
    "PartitionAssignment",
    "StructureError",
    "SweepResult",
    "SyntheticSpec",
    "TrainConfig",
    "TrainingCurves",
    "acr",
    "build_confusion",
    "coarse_accuracy",
    "correlate_acr_delta",
    "delta_a",
    "fine_accuracy",
    "generate_synthetic",
    "init_model",
    "inject_label_noise",
    "load_hierarchy",
    "map_fine_to_coarse",
    "predict",
    "repartition",
    "restrict_coarse",
    "run_capacity_controls",
    "run_granularity_pair",
    "same_coarse",
    "stratified_subsample",
    "train",
    "train_test_split",
]

__version__ = "0.1.0"
