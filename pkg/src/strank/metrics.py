"""Spearman correlation with average ranks for ties, and evaluation reports."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ArgumentError
from .model import forward


def average_ranks(values) -> np.ndarray:
    """1-based ranks; tied values share the mean of the ranks they span."""
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    # start index of each run of equal values
    starts = np.flatnonzero(np.r_[True, sorted_vals[1:] != sorted_vals[:-1]])
    ends = np.r_[starts[1:], n]
    run_rank = (starts + ends + 1) / 2.0
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = np.repeat(run_rank, ends - starts)
    return ranks


def _pearson(a, b) -> float:
    a = a - a.mean()
    b = b - b.mean()
    denom = math.sqrt(float(np.dot(a, a)) * float(np.dot(b, b)))
    if denom == 0.0:
        return math.nan
    return float(np.clip(np.dot(a, b) / denom, -1.0, 1.0))


def spearman(pred, target) -> float:
    """Spearman correlation; NaN when either input is constant."""
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    if pred.size != target.size:
        raise ArgumentError(f"length mismatch: {pred.size} vs {target.size}")
    if pred.size < 2:
        raise ArgumentError("spearman needs at least two observations")
    return _pearson(average_ranks(pred), average_ranks(target))


def spearman_columns(pred, target) -> np.ndarray:
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.ndim == 1:
        pred = pred[:, None]
    if target.ndim == 1:
        target = target[:, None]
    if pred.shape != target.shape:
        raise ArgumentError(f"prediction shape {pred.shape} != target shape {target.shape}")
    return np.array([spearman(pred[:, g], target[:, g]) for g in range(pred.shape[1])])


@dataclass
class Report:
    per_gene_scc: list[float]
    gene_names: list[str] | None = None
    history: list[dict] = field(default_factory=list)
    fingerprint: str = ""

    @property
    def finite(self) -> list[float]:
        return [v for v in self.per_gene_scc if not math.isnan(v)]

    @property
    def nan_count(self) -> int:
        return len(self.per_gene_scc) - len(self.finite)

    @property
    def mean_scc(self) -> float:
        finite = self.finite
        return float(np.mean(finite)) if finite else math.nan

    def write(self, directory) -> None:
        """Write ``report.csv`` (gene, scc) and ``summary.json``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        names = self.gene_names or [f"g{k}" for k in range(len(self.per_gene_scc))]
        with open(directory / "report.csv", "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["gene", "scc"])
            for name, value in zip(names, self.per_gene_scc):
                writer.writerow([name, format_float(value)])
        summary = {
            "mean_scc": None if math.isnan(self.mean_scc) else self.mean_scc,
            "nan_count": self.nan_count,
            "n_genes": len(self.per_gene_scc),
            "config_fingerprint": self.fingerprint,
        }
        (directory / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        if self.history:
            keys = sorted({k for row in self.history for k in row}, key=_history_key)
            with open(directory / "history.csv", "w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(keys)
                for row in self.history:
                    writer.writerow([format_float(row.get(k, math.nan)) for k in keys])


def _history_key(name):
    return (name != "epoch", name)


def format_float(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return "nan"
    return repr(value)


def evaluate(params, dataset, fingerprint: str = "") -> Report:
    """Per-gene Spearman of predictions against the dataset's evaluation targets.

    Noiseless ``targets`` are used when the dataset carries them (synthetic
    splits); otherwise the observed counts are the reference.
    """
    pred, _ = forward(params, dataset.features)
    target = dataset.targets if dataset.targets is not None else dataset.counts
    if target.shape[1] != pred.shape[1]:
        raise ArgumentError(f"model predicts {pred.shape[1]} genes, dataset has {target.shape[1]}")
    return Report(
        per_gene_scc=spearman_columns(pred, target).tolist(),
        gene_names=dataset.gene_names,
        fingerprint=fingerprint,
    )
