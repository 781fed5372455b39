from .datasets import (
    TrainingDataset,
    chained_dataset_from_sims,
    generate_npe_dataset,
    gnpe_dataset_from_sims,
    gnpe_transform_example,
    npe_dataset_from_sims,
    pose_dataset_from_sims,
)
from .estimator import (
    ConditionalGaussianEstimator,
    load_checkpoint,
    save_checkpoint,
    save_loss_history,
)

__all__ = [
    "ConditionalGaussianEstimator",
    "TrainingDataset",
    "chained_dataset_from_sims",
    "generate_npe_dataset",
    "gnpe_dataset_from_sims",
    "gnpe_transform_example",
    "load_checkpoint",
    "npe_dataset_from_sims",
    "pose_dataset_from_sims",
    "save_checkpoint",
    "save_loss_history",
]
