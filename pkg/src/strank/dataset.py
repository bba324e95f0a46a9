"""Spot-level data container and its on-disk CSV layout.

A dataset directory holds::

    features.csv   header x0..x{d-1}, one row per spot
    counts.csv     header g0..g{G-1}, non-negative integers
    tissues.csv    header ``tissue``
    targets.csv    optional, header t0..t{G-1}; noiseless evaluation targets
    meta.json      d, n_genes, n_spots, gene_names, provenance, has_targets

Files are UTF-8 with LF line endings. Features are written with 17
significant digits so that they round-trip to the same binary64 value.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ArgumentError, SchemaError

FLOAT_FMT = "%.17g"


@dataclass(eq=False)
class Dataset:
    features: np.ndarray
    counts: np.ndarray
    tissue_ids: np.ndarray
    gene_names: list[str] | None = None
    targets: np.ndarray | None = None
    provenance: str = ""
    library_sizes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim == 1:
            self.features = self.features[:, None]
        counts = np.asarray(self.counts)
        if counts.ndim == 1:
            counts = counts[:, None]
        if counts.size and not np.issubdtype(counts.dtype, np.integer):
            if np.any(counts != np.round(counts)):
                raise SchemaError("counts must be integers")
        self.counts = counts.astype(np.int64)
        self.tissue_ids = np.asarray(self.tissue_ids, dtype=np.int64).reshape(-1)
        n = self.features.shape[0]
        if self.counts.shape[0] != n or self.tissue_ids.shape[0] != n:
            raise SchemaError(
                f"row counts differ: features {n}, counts {self.counts.shape[0]}, "
                f"tissues {self.tissue_ids.shape[0]}"
            )
        if np.any(self.counts < 0):
            raise SchemaError("counts must be non-negative")
        if n:
            present = np.unique(self.tissue_ids)
            if present[0] != 0 or present[-1] != present.size - 1:
                raise SchemaError(f"tissue ids must form a contiguous range from 0, got {present.tolist()}")
        if self.targets is not None:
            self.targets = np.asarray(self.targets, dtype=np.float64)
            if self.targets.ndim == 1:
                self.targets = self.targets[:, None]
            if self.targets.shape != self.counts.shape:
                raise SchemaError(f"targets shape {self.targets.shape} != counts shape {self.counts.shape}")
        if self.gene_names is not None and len(self.gene_names) != self.n_genes:
            raise SchemaError("gene_names length does not match the number of genes")
        self.library_sizes = self.counts.sum(axis=1)

    @property
    def n_spots(self) -> int:
        return self.features.shape[0]

    @property
    def n_genes(self) -> int:
        return self.counts.shape[1]

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_tissues(self) -> int:
        return int(self.tissue_ids.max()) + 1 if self.n_spots else 0

    def subset(self, rows, tissue_ids=None) -> "Dataset":
        """Rows ``rows`` as a new dataset, optionally with replacement tissue ids."""
        rows = np.asarray(rows)
        return Dataset(
            features=self.features[rows],
            counts=self.counts[rows],
            tissue_ids=self.tissue_ids[rows] if tissue_ids is None else tissue_ids,
            gene_names=self.gene_names,
            targets=None if self.targets is None else self.targets[rows],
            provenance=self.provenance,
        )

    def with_counts(self, counts) -> "Dataset":
        return Dataset(
            features=self.features,
            counts=counts,
            tissue_ids=self.tissue_ids,
            gene_names=self.gene_names,
            targets=self.targets,
            provenance=self.provenance,
        )

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        same_targets = (self.targets is None and other.targets is None) or (
            self.targets is not None
            and other.targets is not None
            and np.array_equal(self.targets, other.targets)
        )
        return (
            np.array_equal(self.features, other.features)
            and np.array_equal(self.counts, other.counts)
            and np.array_equal(self.tissue_ids, other.tissue_ids)
            and self.gene_names == other.gene_names
            and self.provenance == other.provenance
            and same_targets
        )


def _write_matrix(path: Path, prefix: str, values: np.ndarray, fmt: str):
    header = ",".join(f"{prefix}{k}" for k in range(values.shape[1]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        if values.shape[1]:
            np.savetxt(fh, values, fmt=fmt, delimiter=",", newline="\n")


def save_dataset(dataset: Dataset, directory) -> None:
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        _write_matrix(directory / "features.csv", "x", dataset.features, FLOAT_FMT)
        _write_matrix(directory / "counts.csv", "g", dataset.counts, "%d")
        with open(directory / "tissues.csv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write("tissue\n")
            fh.writelines(f"{t}\n" for t in dataset.tissue_ids.tolist())
        if dataset.targets is not None:
            _write_matrix(directory / "targets.csv", "t", dataset.targets, FLOAT_FMT)
        meta = {
            "d": dataset.input_dim,
            "n_genes": dataset.n_genes,
            "n_spots": dataset.n_spots,
            "gene_names": dataset.gene_names,
            "provenance": dataset.provenance,
            "has_targets": dataset.targets is not None,
        }
        with open(directory / "meta.json", "w", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"failed to write dataset to {directory}: {exc}") from exc


def _read_table(path: Path, prefix: str, width: int, n_rows: int, parse):
    if not path.exists():
        raise FileNotFoundError(f"missing dataset file: {path}")
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = [f"{prefix}{k}" for k in range(width)]
        if (header or []) != expected:
            raise SchemaError(f"{path.name}: expected header {','.join(expected)!r}")
        if width == 0:
            return np.zeros((n_rows, 0))
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != width:
                raise SchemaError(f"{path.name}: row {lineno} has {len(row)} fields, expected {width}")
            try:
                rows.append([parse(v) for v in row])
            except ValueError as exc:
                raise SchemaError(f"{path.name}: row {lineno}: {exc}") from None
    if len(rows) != n_rows:
        raise SchemaError(f"{path.name}: {len(rows)} data rows, meta.json declares {n_rows}")
    return np.array(rows).reshape(n_rows, width)


def _parse_count(text: str) -> int:
    value = int(text)
    if value < 0:
        raise ValueError(f"negative count {value}")
    return value


def load_dataset(directory) -> Dataset:
    directory = Path(directory)
    meta_path = directory / "meta.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"missing dataset file: {meta_path}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    try:
        d, n_genes, n = int(meta["d"]), int(meta["n_genes"]), int(meta["n_spots"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"meta.json: bad or missing field ({exc})") from None
    features = _read_table(directory / "features.csv", "x", d, n, float)
    counts = _read_table(directory / "counts.csv", "g", n_genes, n, _parse_count)
    tissues = _read_tissues(directory / "tissues.csv", n)
    targets = None
    if meta.get("has_targets"):
        targets = _read_table(directory / "targets.csv", "t", n_genes, n, float)
    return Dataset(
        features=features.astype(np.float64),
        counts=counts.astype(np.int64),
        tissue_ids=tissues,
        gene_names=meta.get("gene_names"),
        targets=targets,
        provenance=meta.get("provenance", ""),
    )


def _read_tissues(path: Path, n_rows: int) -> np.ndarray:
    if not path.exists():
        raise FileNotFoundError(f"missing dataset file: {path}")
    lines = path.read_text(encoding="utf-8").split("\n")
    if lines[0] != "tissue":
        raise SchemaError(f"{path.name}: expected header 'tissue'")
    body = [ln for ln in lines[1:] if ln != ""]
    if len(body) != n_rows:
        raise SchemaError(f"{path.name}: {len(body)} data rows, meta.json declares {n_rows}")
    try:
        return np.array([int(v) for v in body], dtype=np.int64)
    except ValueError as exc:
        raise SchemaError(f"{path.name}: {exc}") from None


def split_by_tissue(dataset: Dataset, train_tissues, val_tissue, test_tissue):
    """Partition rows by tissue into train/val/test, re-indexing tissue ids per split."""
    if val_tissue is None or test_tissue is None:
        raise ArgumentError("both a validation and a test tissue are required")
    train = sorted(set(int(t) for t in train_tissues))
    if not train:
        raise ArgumentError("at least one training tissue is required")
    groups = [train, [int(val_tissue)], [int(test_tissue)]]
    flat = [t for g in groups for t in g]
    if len(flat) != len(set(flat)):
        raise ArgumentError(f"tissue groups overlap: train={train}, val={val_tissue}, test={test_tissue}")
    known = set(np.unique(dataset.tissue_ids).tolist())
    unknown = [t for t in flat if t not in known]
    if unknown:
        raise ArgumentError(f"unknown tissue ids {unknown}")
    splits = []
    for group in groups:
        rows = np.flatnonzero(np.isin(dataset.tissue_ids, group))
        remap = {t: k for k, t in enumerate(group)}
        new_ids = np.array([remap[t] for t in dataset.tissue_ids[rows].tolist()], dtype=np.int64)
        splits.append(dataset.subset(rows, tissue_ids=new_ids))
    return tuple(splits)
