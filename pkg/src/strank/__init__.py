"""Relational (ranking) losses for count regression under batch effects."""

from .dataset import Dataset, load_dataset, save_dataset, split_by_tissue
from .errors import ArgumentError, DomainError, SchemaError, StrankError
from .losses import LossSpec, compute_loss
from .metrics import Report, evaluate, spearman
from .model import MlpParams, backward, forward, init_params
from .optim import TrainConfig, train
from .sampling import RngStream
from .synthgen import SynthConfig, generate_dataset

__version__ = "0.1.0"

__all__ = [
    "ArgumentError",
    "Dataset",
    "DomainError",
    "LossSpec",
    "MlpParams",
    "Report",
    "RngStream",
    "SchemaError",
    "StrankError",
    "SynthConfig",
    "TrainConfig",
    "backward",
    "compute_loss",
    "evaluate",
    "forward",
    "generate_dataset",
    "init_params",
    "load_dataset",
    "save_dataset",
    "spearman",
    "split_by_tissue",
    "train",
]
