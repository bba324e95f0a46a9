"""Experiment configuration documents.

A config is a JSON (canonical) or YAML document whose sections mirror the
core dataclasses one-to-one::

    {"synth": {...} | "ingest": {...}, "loss": {...}, "train": {...},
     "model": {"hidden_dim": 128}, "repeats": 1, "downsample_rate": 1.0}
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..errors import SchemaError
from ..losses import LossSpec
from ..optim import TrainConfig
from ..synthgen import MEAN_FUNCTIONS, MeanFnParams, SynthConfig, TissueBatchParams

LossKind = Literal["mse", "poisson", "nb", "rank", "pair_strank", "pcc", "list_strank"]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class MeanFnSection(_Section):
    a: float = Field(MEAN_FUNCTIONS[0].a, ge=0)
    b: float = Field(MEAN_FUNCTIONS[0].b, ge=0)
    c: float = MEAN_FUNCTIONS[0].c
    d: float = MEAN_FUNCTIONS[0].d


class TissueSection(_Section):
    alpha: float = Field(1.0, gt=0)
    beta: float = Field(0.0, ge=0)
    sampling_interval: tuple[float, float] = (0.0, 1.0)


class SynthSection(_Section):
    mean_fn: MeanFnSection = MeanFnSection()
    tissues: list[TissueSection] = Field(
        default_factory=lambda: [TissueSection(), TissueSection(alpha=10.0, beta=10.0, sampling_interval=(0.0, 0.5))],
        min_length=1,
    )
    dispersion: float = Field(2.0, gt=0)
    n_train_per_tissue: int = Field(50_000, gt=0)
    n_val: int = Field(10_000, gt=0)
    n_test: int = Field(10_000, gt=0)
    mode: Literal["uniform", "imbalanced"] = "uniform"
    seed: int = Field(0, ge=0)

    def build(self) -> SynthConfig:
        return SynthConfig(
            mean_fn=MeanFnParams(**self.mean_fn.model_dump()),
            tissues=tuple(TissueBatchParams(**t.model_dump()) for t in self.tissues),
            dispersion=self.dispersion,
            n_train_per_tissue=self.n_train_per_tissue,
            n_val=self.n_val,
            n_test=self.n_test,
            mode=self.mode,
            seed=self.seed,
        )


class IngestSection(_Section):
    path: str
    train_tissues: list[int] = Field(min_length=1)
    val_tissue: int
    test_tissue: int


class LossSection(_Section):
    kind: LossKind
    margin: float = Field(1.0, ge=0)
    nb_dispersion: float = Field(2.0, gt=0)
    list_size: int = Field(256, ge=2)
    size_correction: bool = False

    def build(self) -> LossSpec:
        return LossSpec(**self.model_dump())


class TrainSection(_Section):
    learning_rate: float = Field(1e-3, gt=0)
    weight_decay: float = Field(0.01, ge=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)
    epochs: int = Field(2000, ge=0)
    batch_size: int = Field(256, ge=2)
    lr_min: float = Field(0.0, ge=0)
    batch_strategy: Literal["default", "intra_tissue", "inter_tissue"] = "default"
    early_stop_patience: Optional[int] = Field(None, ge=1)
    seed: int = Field(0, ge=0)
    dtype: Literal["float32", "float64"] = "float32"

    def build(self) -> TrainConfig:
        return TrainConfig(**self.model_dump())


class ModelSection(_Section):
    hidden_dim: int = Field(128, ge=0)
    init: Literal["uniform", "he"] = "uniform"


class ExperimentConfig(_Section):
    synth: Optional[SynthSection] = None
    ingest: Optional[IngestSection] = None
    loss: LossSection
    train: TrainSection = TrainSection()
    model: ModelSection = ModelSection()
    repeats: int = Field(1, ge=1)
    downsample_rate: float = Field(1.0, ge=0, le=1)
    output_dir: Optional[str] = None

    @model_validator(mode="after")
    def _one_data_source(self):
        if (self.synth is None) == (self.ingest is None):
            raise ValueError("exactly one of 'synth' or 'ingest' must be given")
        return self

    def fingerprint(self) -> str:
        return config_fingerprint(self.model_dump(mode="json", exclude={"output_dir"}))


def config_fingerprint(document) -> str:
    text = json.dumps(document, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def _format_validation_error(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        where = ".".join(str(p) for p in err["loc"]) or "<root>"
        parts.append(f"{where}: {err['msg']}")
    return "; ".join(parts)


def parse_config(document: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(document)
    except ValidationError as exc:
        raise SchemaError(_format_validation_error(exc)) from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix in (".yaml", ".yml"):
            document = yaml.safe_load(text)
        else:
            document = json.loads(text)
    except (ValueError, yaml.YAMLError) as exc:
        raise SchemaError(f"{path}: not a valid config document ({exc})") from None
    if not isinstance(document, dict):
        raise SchemaError(f"{path}: top level must be a mapping")
    return parse_config(document)
