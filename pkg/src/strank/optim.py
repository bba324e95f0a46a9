"""AdamW, cosine annealing, mini-batch construction and the training loop."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .dataset import Dataset
from .errors import ArgumentError, DomainError
from .losses import LossSpec, compute_loss
from .metrics import evaluate
from .model import MlpParams, backward, forward
from .sampling import RngStream, grouped_permutation

STRATEGIES = ("default", "intra_tissue", "inter_tissue")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 2000
    batch_size: int = 256
    lr_min: float = 0.0
    batch_strategy: str = "default"
    early_stop_patience: int | None = None
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise DomainError("learning_rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise DomainError("Adam betas must lie in [0, 1)")
        if self.batch_size < 2:
            raise DomainError("batch_size must be >= 2")
        if self.epochs < 0:
            raise DomainError("epochs must be >= 0")
        if self.batch_strategy not in STRATEGIES:
            raise DomainError(f"batch_strategy must be one of {STRATEGIES}")
        if self.dtype not in ("float32", "float64"):
            raise DomainError("dtype must be float32 or float64")
        if self.early_stop_patience is not None and self.early_stop_patience < 1:
            raise DomainError("early_stop_patience must be >= 1")

    def replace(self, **changes) -> "TrainConfig":
        return replace(self, **changes)


class OptimState:
    """First/second moment buffers shaped like the flat parameter vector."""

    def __init__(self, params: MlpParams):
        self.m = np.zeros_like(params.flat)
        self.v = np.zeros_like(params.flat)
        self.step = 0


def adamw_step(params: MlpParams, grads, state: OptimState, lr: float, config: TrainConfig):
    """One decoupled-weight-decay Adam update, applied to ``params`` in place.

    ``theta <- theta - lr*wd*theta - lr * m_hat / (sqrt(v_hat) + eps)``
    """
    if grads.flat.shape != params.flat.shape or state.m.shape != params.flat.shape:
        raise ArgumentError("parameter, gradient and optimizer state shapes differ")
    if lr < 0:
        raise DomainError("learning rate must be >= 0")
    state.step += 1
    b1, b2 = config.beta1, config.beta2
    g = grads.flat
    state.m *= b1
    state.m += (1.0 - b1) * g
    state.v *= b2
    state.v += (1.0 - b2) * (g * g)
    bias1 = 1.0 - b1**state.step
    bias2 = 1.0 - b2**state.step
    theta = params.flat
    if config.weight_decay:
        theta *= 1.0 - lr * config.weight_decay
    denom = np.sqrt(state.v / bias2)
    denom += config.adam_eps
    theta -= (lr / bias1) * state.m / denom
    return params, state


def cosine_lr(step: int, total_steps: int, lr0: float, lr_min: float = 0.0) -> float:
    if total_steps < 1:
        raise DomainError("total_steps must be >= 1")
    if not 0 <= step <= total_steps:
        raise DomainError(f"step {step} outside [0, {total_steps}]")
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + math.cos(math.pi * step / total_steps))


def _chunk(order: np.ndarray, batch_size: int) -> list[np.ndarray]:
    batches = [order[k : k + batch_size] for k in range(0, order.size, batch_size)]
    if batches and batches[-1].size < 2:
        batches.pop()
    return batches


def make_minibatches(dataset, batch_size: int, strategy: str, rng: RngStream) -> list[np.ndarray]:
    """Index batches covering each retained sample exactly once.

    ``default`` chunks a global shuffle; ``intra_tissue`` never mixes tissues in
    a batch; ``inter_tissue`` interleaves per-tissue shuffles so every batch
    holds tissues in proportion to their sizes. A trailing batch with fewer
    than two samples is dropped.
    """
    if batch_size < 2:
        raise DomainError("batch_size must be >= 2")
    tissue_ids = dataset.tissue_ids if isinstance(dataset, Dataset) else np.asarray(dataset)
    n = tissue_ids.size
    if strategy == "default":
        return _chunk(rng.permutation(n), batch_size)
    blocks = []
    for t in np.unique(tissue_ids):
        idx = np.flatnonzero(tissue_ids == t)
        blocks.append(idx[rng.permutation(idx.size)])
    if strategy == "intra_tissue":
        batches = [b for block in blocks for b in _chunk(block, batch_size)]
        return [batches[k] for k in rng.permutation(len(batches))]
    if strategy == "inter_tissue":
        # fractional position within its tissue; equal sizes give a plain round-robin
        keys = np.concatenate([(np.arange(b.size) + 0.5) / b.size for b in blocks])
        owners = np.concatenate([np.full(b.size, k) for k, b in enumerate(blocks)])
        merged = np.concatenate(blocks)[np.lexsort((owners, keys))]
        return _chunk(merged, batch_size)
    raise DomainError(f"unknown batch strategy {strategy!r}")


def group_for_loss(batch, tissue_ids, loss_spec: LossSpec, rng: RngStream):
    """Build the relational index structure for one batch.

    Returns ``(pairs, groups)`` as positions within ``batch``; both are ``None``
    for pointwise losses. Samples whose tissue occurs once in the batch are
    left out of pairs and groups.
    """
    structure = loss_spec.structure
    if structure == "none":
        return None, None
    local = np.asarray(tissue_ids)[np.asarray(batch)]
    counts = np.bincount(local)
    positions = np.flatnonzero(counts[local] >= 2)
    if structure == "pairs":
        if positions.size == 0:
            return np.zeros((0, 2), dtype=np.int64), None
        perm = grouped_permutation(local[positions], rng)
        return np.stack([positions, positions[perm]], axis=1), None
    groups = []
    k = loss_spec.list_size
    for t in np.flatnonzero(counts >= 2):
        members = np.flatnonzero(local == t)
        members = members[rng.permutation(members.size)]
        for start in range(0, members.size, k):
            chunk = members[start : start + k]
            if chunk.size >= 2:
                groups.append(chunk)
    return None, groups


def train(params: MlpParams, dataset: Dataset, loss_spec: LossSpec, config: TrainConfig, val: Dataset | None = None):
    """Train a copy of ``params``; returns ``(params, history)``.

    With ``val`` every epoch records the validation mean SCC. With
    ``early_stop_patience`` as well, training stops after that many epochs
    without improvement and the best-scoring parameters are returned.
    """
    dtype = np.dtype(config.dtype)
    params = params.astype(dtype)
    history: list[dict] = []
    if config.epochs == 0:
        return params, history
    rng = RngStream(config.seed, (7,))
    state = OptimState(params)
    X = dataset.features.astype(dtype)
    E = dataset.counts
    lib = dataset.library_sizes
    best_scc, best_params, since_best = -math.inf, None, 0
    for epoch in range(config.epochs):
        lr = cosine_lr(epoch, config.epochs, config.learning_rate, config.lr_min)
        total, n_batches = 0.0, 0
        for batch in make_minibatches(dataset, config.batch_size, config.batch_strategy, rng):
            pairs, groups = group_for_loss(batch, dataset.tissue_ids, loss_spec, rng)
            out, cache = forward(params, X[batch])
            value, dout = compute_loss(loss_spec, E[batch], out, pairs, groups, lib[batch])
            grads = backward(params, cache, dout)
            adamw_step(params, grads, state, lr, config)
            total += value
            n_batches += 1
        record = {"epoch": epoch, "loss": total / max(n_batches, 1), "lr": lr}
        if not np.all(np.isfinite(params.flat)):
            raise FloatingPointError(f"non-finite parameters after epoch {epoch}")
        if val is not None:
            scc = evaluate(params, val).mean_scc
            record["val_scc"] = scc
            if config.early_stop_patience is not None:
                if scc > best_scc:
                    best_scc, best_params, since_best = scc, params.copy(), 0
                else:
                    since_best += 1
        history.append(record)
        if best_params is not None and since_best >= config.early_stop_patience:
            break
    if best_params is not None:
        return best_params, history
    return params, history
