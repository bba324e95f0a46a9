"""One-dimensional synthetic count data with per-tissue batch effects.

Each tissue observes ``e ~ NB(alpha * mu(x) + beta, r)`` where the shared
mean curve is ``mu(x) = a sin(cx) + b sin(dx) + a + b`` on ``x in [0, 1]``.
Validation and test sets use uniform ``x`` and carry the noiseless ``mu(x)``
as evaluation targets.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import Dataset
from .errors import DomainError
from .sampling import RngStream, binomial_sample, nb_sample

MODES = ("uniform", "imbalanced")


@dataclass(frozen=True)
class MeanFnParams:
    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        if self.a < 0 or self.b < 0:
            raise DomainError("mean-function amplitudes a and b must be >= 0")


# Four mixed-frequency curves used for the Table 1 style studies.
MEAN_FUNCTIONS = (
    MeanFnParams(2.0, 1.0, 6.0, 20.0),
    MeanFnParams(1.0, 1.0, 3.0, 9.0),
    MeanFnParams(3.0, 0.5, 4.0, 25.0),
    MeanFnParams(1.5, 2.5, 8.0, 15.0),
)


@dataclass(frozen=True)
class TissueBatchParams:
    alpha: float = 1.0
    beta: float = 0.0
    sampling_interval: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        lo, hi = self.sampling_interval
        if not self.alpha > 0:
            raise DomainError(f"alpha must be positive, got {self.alpha}")
        if self.beta < 0:
            raise DomainError(f"beta must be >= 0, got {self.beta}")
        if not (0.0 <= lo < hi <= 1.0):
            raise DomainError(f"sampling interval must satisfy 0 <= lo < hi <= 1, got {self.sampling_interval}")


def default_tissues() -> tuple[TissueBatchParams, ...]:
    """Reference tissue plus a scaled, offset tissue confined to [0, 0.5] when imbalanced."""
    return (
        TissueBatchParams(1.0, 0.0),
        TissueBatchParams(10.0, 10.0, (0.0, 0.5)),
    )


@dataclass(frozen=True)
class SynthConfig:
    mean_fn: MeanFnParams = MEAN_FUNCTIONS[0]
    tissues: tuple[TissueBatchParams, ...] = field(default_factory=default_tissues)
    dispersion: float = 2.0
    n_train_per_tissue: int = 50_000
    n_val: int = 10_000
    n_test: int = 10_000
    mode: str = "uniform"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "tissues", tuple(self.tissues))
        if self.mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.dispersion > 0:
            raise DomainError(f"dispersion must be positive, got {self.dispersion}")
        if not self.tissues:
            raise DomainError("at least one tissue is required")
        for name in ("n_train_per_tissue", "n_val", "n_test"):
            if getattr(self, name) <= 0:
                raise DomainError(f"{name} must be positive")

    def replace(self, **changes) -> "SynthConfig":
        return replace(self, **changes)


def mean_function(x, params: MeanFnParams):
    x_arr = np.asarray(x, dtype=np.float64)
    if np.any(~(x_arr >= 0.0)) or np.any(~(x_arr <= 1.0)):
        raise DomainError("mean function is defined on x in [0, 1]")
    out = (
        params.a * np.sin(params.c * x_arr)
        + params.b * np.sin(params.d * x_arr)
        + params.a
        + params.b
    )
    # a sin + a can round to a tiny negative value
    out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out


def generate_tissue(config: SynthConfig, tissue_index: int, count: int, rng: RngStream):
    if not 0 <= tissue_index < len(config.tissues):
        raise DomainError(f"tissue index {tissue_index} out of range for {len(config.tissues)} tissues")
    tissue = config.tissues[tissue_index]
    lo, hi = tissue.sampling_interval if config.mode == "imbalanced" else (0.0, 1.0)
    x = rng.uniform(lo, hi, size=count)
    mean = tissue.alpha * mean_function(x, config.mean_fn) + tissue.beta
    counts = nb_sample(mean, config.dispersion, rng)
    return x, counts


def _evaluation_split(config: SynthConfig, n: int, rng: RngStream, name: str) -> Dataset:
    x = rng.uniform(0.0, 1.0, size=n)
    mu = mean_function(x, config.mean_fn)
    ref = config.tissues[0]
    counts = nb_sample(ref.alpha * mu + ref.beta, config.dispersion, rng)
    return Dataset(
        features=x[:, None],
        counts=counts[:, None],
        tissue_ids=np.zeros(n, dtype=np.int64),
        targets=mu[:, None],
        provenance=f"synthetic {name} seed={config.seed}",
    )


def generate_dataset(config: SynthConfig):
    """Return ``(train, val, test)`` datasets for ``config``.

    Every tissue and split draws from its own child stream of ``config.seed``,
    so the output is bitwise reproducible.
    """
    root = RngStream(config.seed)
    xs, es, ts = [], [], []
    for t in range(len(config.tissues)):
        x, e = generate_tissue(config, t, config.n_train_per_tissue, root.child(0, t))
        xs.append(x)
        es.append(e)
        ts.append(np.full(config.n_train_per_tissue, t, dtype=np.int64))
    train = Dataset(
        features=np.concatenate(xs)[:, None],
        counts=np.concatenate(es)[:, None],
        tissue_ids=np.concatenate(ts),
        provenance=f"synthetic train seed={config.seed} mode={config.mode}",
    )
    val = _evaluation_split(config, config.n_val, root.child(1), "val")
    test = _evaluation_split(config, config.n_test, root.child(2), "test")
    return train, val, test


def downsample_counts(dataset: Dataset, rate: float, rng: RngStream) -> Dataset:
    """Binomially thin every count with keep-probability ``rate``."""
    if not 0.0 <= rate <= 1.0:
        raise DomainError(f"downsampling rate must lie in [0, 1], got {rate}")
    if rate == 1.0:
        return dataset.with_counts(dataset.counts.copy())
    return dataset.with_counts(binomial_sample(dataset.counts, rate, rng))
