"""Training, evaluation, metrics, checkpoints and the command line."""

from lsdgnn.harness.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from lsdgnn.harness.config import CurriculumConfig, PathsConfig, RunConfig, load_run_config
from lsdgnn.harness.metrics import EvalReport, compute_metrics, confusion_matrix
from lsdgnn.harness.training import EpochLog, TrainResult, evaluate, train, train_seeds

__all__ = [
    "Checkpoint", "load_checkpoint", "save_checkpoint",
    "CurriculumConfig", "PathsConfig", "RunConfig", "load_run_config",
    "EvalReport", "compute_metrics", "confusion_matrix",
    "EpochLog", "TrainResult", "evaluate", "train", "train_seeds",
]
