"""Experiment orchestration: single configured runs, Table 1 and the sweeps.

Every study is expanded into independent *cells* (one trained model each).
Cells are pure functions of their frozen configuration, so they can run in a
process pool and their results can be cached on disk under the hash of that
configuration. Output CSVs are written only after all cells finish, in a
fixed order, so they are byte-identical across runs and worker counts.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from ..dataset import load_dataset, split_by_tissue
from ..losses import DISPLAY_NAMES, LOSS_KINDS, LossSpec
from ..metrics import Report, evaluate, format_float
from ..model import init_params, save_params
from ..optim import TrainConfig, train
from ..sampling import RngStream
from ..synthgen import MEAN_FUNCTIONS, MODES, SynthConfig, TissueBatchParams, downsample_counts, generate_dataset
from .config import ExperimentConfig, config_fingerprint

log = logging.getLogger(__name__)

REFERENCE_TABLE1 = {
    "mse": (0.748, 0.583),
    "poisson": (0.777, 0.603),
    "nb": (0.788, 0.601),
    "rank": (0.835, 0.738),
    "pair_strank": (0.907, 0.818),
    "pcc": (0.858, 0.560),
    "list_strank": (0.945, 0.828),
}
REFERENCE_NK = {
    2: (0.907, 0.818),
    4: (0.938, 0.837),
    8: (0.958, 0.839),
    16: (0.943, 0.833),
    32: (0.938, 0.818),
    64: (0.926, 0.827),
    128: (0.941, 0.845),
    256: (0.945, 0.828),
}
NK_VALUES = tuple(REFERENCE_NK)
DOWNSAMPLE_RATES = (0.01, 0.05, 0.1, 0.2, 0.5, 0.8, 1.0)
DOWNSAMPLE_LOSSES = ("rank", "pair_strank", "pcc", "list_strank")
DEFAULT_PARAM_GRID = {
    "alpha2": (1.0, 5.0, 10.0, 20.0),
    "beta2": (0.0, 5.0, 10.0, 20.0),
    "dispersion": (0.5, 2.0, 20.0),
    "batch_effect": (0.0, 1.0),
}
# batch_effect=0 gives every tissue alpha=1, beta=0; 1 keeps the configured tissues
SWEEPABLE = ("alpha1", "beta1", "alpha2", "beta2", "dispersion", "batch_effect")


@dataclass(frozen=True)
class Preset:
    name: str
    n_train_per_tissue: int
    n_val: int
    n_test: int
    epochs: int
    seeds: int
    batch_size: int = 256
    learning_rate: float = 1e-3


PRESETS = {
    "desk": Preset("desk", 5_000, 10_000, 10_000, 300, 3),
    "paper": Preset("paper", 50_000, 10_000, 10_000, 2000, 3),
    # seconds-long wiring check, not meant to produce meaningful numbers
    "smoke": Preset("smoke", 300, 400, 400, 3, 1, batch_size=64),
}


def get_preset(preset) -> Preset:
    if isinstance(preset, Preset):
        return preset
    try:
        return PRESETS[preset]
    except KeyError:
        from ..errors import ArgumentError

        raise ArgumentError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}") from None


@dataclass(frozen=True)
class Cell:
    synth: SynthConfig
    loss: LossSpec
    train: TrainConfig
    hidden_dim: int = 128
    downsample_rate: float = 1.0
    init: str = "uniform"

    def key(self) -> str:
        return config_fingerprint(asdict(self))


def synth_for(preset: Preset, mode: str, mean_fn, seed: int, **overrides) -> SynthConfig:
    cfg = SynthConfig(
        mean_fn=mean_fn,
        n_train_per_tissue=preset.n_train_per_tissue,
        n_val=preset.n_val,
        n_test=preset.n_test,
        mode=mode,
        seed=seed,
    )
    return cfg.replace(**overrides) if overrides else cfg


def train_for(preset: Preset, seed: int) -> TrainConfig:
    return TrainConfig(
        epochs=preset.epochs,
        batch_size=preset.batch_size,
        learning_rate=preset.learning_rate,
        seed=seed,
    )


def run_cell(cell: Cell) -> dict:
    """Generate data, train one model and score it on the noiseless test split."""
    start = time.perf_counter()
    train_set, _, test_set = generate_dataset(cell.synth)
    if cell.downsample_rate < 1.0:
        train_set = downsample_counts(train_set, cell.downsample_rate, RngStream(cell.synth.seed, (9,)))
    params = init_params(
        train_set.input_dim, cell.hidden_dim, train_set.n_genes, RngStream(cell.train.seed, (3,)), scheme=cell.init
    )
    params, history = train(params, train_set, cell.loss, cell.train)
    report = evaluate(params, test_set)
    return {
        "mean_scc": report.mean_scc,
        "nan_count": report.nan_count,
        "final_loss": history[-1]["loss"] if history else math.nan,
        "seconds": time.perf_counter() - start,
    }


def _limit_threads():
    from threadpoolctl import threadpool_limits

    threadpool_limits(1)


def run_cells(cells: list[Cell], workers: int = 1, cache_dir=None) -> list[dict]:
    """Run ``cells`` (in a process pool when ``workers > 1``), reusing cached results."""
    results: list[dict | None] = [None] * len(cells)
    cache = Path(cache_dir) if cache_dir is not None else None
    if cache is not None:
        cache.mkdir(parents=True, exist_ok=True)
        for k, cell in enumerate(cells):
            path = cache / f"{cell.key()}.json"
            if path.exists():
                results[k] = json.loads(path.read_text())
    pending = [k for k, r in enumerate(results) if r is None]
    log.info("running %d cells (%d cached)", len(pending), len(cells) - len(pending))

    def store(k, result):
        results[k] = result
        if cache is not None:
            (cache / f"{cells[k].key()}.json").write_text(json.dumps(result, sort_keys=True))
        log.info("cell %s %s: scc=%.4f (%.1fs)", cells[k].loss.kind, cells[k].synth.mode, result["mean_scc"], result["seconds"])

    if workers > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=workers, initializer=_limit_threads) as pool:
            for k, result in zip(pending, pool.map(run_cell, [cells[k] for k in pending])):
                store(k, result)
    else:
        for k in pending:
            store(k, run_cell(cells[k]))
    return results


def _record_stats(stats, results) -> None:
    """Total single-process compute time of a study, cached cells included."""
    if stats is not None:
        stats["n_cells"] = len(results)
        stats["cell_seconds"] = float(sum(r["seconds"] for r in results))


def _scc(result) -> float:
    # a constant prediction carries no ranking information
    value = result["mean_scc"]
    return 0.0 if value is None or math.isnan(value) else value


def _mean_std(values) -> tuple[float, float]:
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return math.nan, math.nan
    std = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
    return float(np.mean(values)), std


def _seed_means(results, cells, select) -> list[float]:
    """Per-seed average over mean functions for the cells matching ``select``."""
    by_seed: dict[int, list[float]] = {}
    for cell, result in zip(cells, results):
        if select(cell):
            by_seed.setdefault(cell.train.seed, []).append(_scc(result))
    return [float(np.mean(by_seed[s])) for s in sorted(by_seed)]


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])


def _write_cells(path: Path, cells: list[Cell], results: list[dict], extra=None) -> None:
    rows = []
    for cell, result in zip(cells, results):
        fn = cell.synth.mean_fn
        rows.append(
            [
                cell.loss.kind,
                cell.synth.mode,
                f"{fn.a:g}/{fn.b:g}/{fn.c:g}/{fn.d:g}",
                cell.train.seed,
                cell.loss.list_size,
                cell.downsample_rate,
                result["mean_scc"],
            ]
            + ([extra(cell)] if extra else [])
        )
    header = ["loss", "mode", "mean_fn", "seed", "list_size", "rate", "scc"] + (["param"] if extra else [])
    _write_csv(path, header, rows)


def _seeds(preset: Preset, seeds) -> list[int]:
    return list(range(preset.seeds if seeds is None else seeds))


def reproduce_table1(
    out_dir,
    preset="desk",
    seeds=None,
    workers: int = 1,
    cache_dir=None,
    losses=LOSS_KINDS,
    modes=MODES,
    mean_fns=MEAN_FUNCTIONS,
    stats: dict | None = None,
) -> list[dict]:
    """Every loss in every setting over all mean functions and seeds.

    Writes ``table1.csv`` (one row per loss; mean and standard deviation over
    seeds of the function-averaged SCC, beside the published values) and
    ``table1_cells.csv`` with each trained model's score.
    """
    preset = get_preset(preset)
    cells = [
        Cell(synth_for(preset, mode, fn, s), LossSpec(kind), train_for(preset, s))
        for kind in losses
        for mode in modes
        for fn in mean_fns
        for s in _seeds(preset, seeds)
    ]
    results = run_cells(cells, workers, cache_dir)
    _record_stats(stats, results)
    rows = []
    for kind in losses:
        row = {"loss": DISPLAY_NAMES[kind], "kind": kind}
        for mode in MODES:
            mean, std = _mean_std(_seed_means(results, cells, lambda c: c.loss.kind == kind and c.synth.mode == mode))
            row[f"{mode}_mean"], row[f"{mode}_std"] = mean, std
        row["reference_uniform"], row["reference_imbalanced"] = REFERENCE_TABLE1[kind]
        rows.append(row)
    out = Path(out_dir)
    header = ["loss", "uniform_mean", "uniform_std", "imbalanced_mean", "imbalanced_std", "reference_uniform", "reference_imbalanced"]
    _write_csv(out / "table1.csv", header, [[r[h] for h in header] for r in rows])
    _write_cells(out / "table1_cells.csv", cells, results)
    return rows


def sweep_nk(
    out_dir,
    values=NK_VALUES,
    preset="desk",
    seeds=None,
    workers: int = 1,
    cache_dir=None,
    modes=MODES,
    pair_reference: bool = True,
    mean_fns=MEAN_FUNCTIONS,
    stats: dict | None = None,
) -> list[dict]:
    """ListSTRank per list size; optionally a final ``pair`` row trained with PairSTRank."""
    preset = get_preset(preset)
    values = [int(v) for v in values]
    if any(v < 2 for v in values):
        from ..errors import DomainError

        raise DomainError("list sizes must be >= 2")
    specs = [(str(v), LossSpec("list_strank", list_size=v)) for v in values]
    if pair_reference:
        specs.append(("pair", LossSpec("pair_strank")))
    cells, labels = [], []
    for label, spec in specs:
        for mode in modes:
            for fn in mean_fns:
                for s in _seeds(preset, seeds):
                    cells.append(Cell(synth_for(preset, mode, fn, s), spec, train_for(preset, s)))
                    labels.append(label)
    results = run_cells(cells, workers, cache_dir)
    _record_stats(stats, results)
    label_of = {id(c): lab for c, lab in zip(cells, labels)}
    rows = []
    for label, _ in specs:
        row = {"nk": label}
        for mode in MODES:
            if mode in modes:
                mean, std = _mean_std(
                    _seed_means(results, cells, lambda c: label_of[id(c)] == label and c.synth.mode == mode)
                )
            else:
                mean, std = math.nan, math.nan
            row[f"{mode}_mean"], row[f"{mode}_std"] = mean, std
        ref = REFERENCE_NK.get(int(label)) if label.isdigit() else REFERENCE_TABLE1["pair_strank"]
        row["reference_uniform"], row["reference_imbalanced"] = ref if ref else (math.nan, math.nan)
        rows.append(row)
    header = ["nk", "uniform_mean", "uniform_std", "imbalanced_mean", "imbalanced_std", "reference_uniform", "reference_imbalanced"]
    _write_csv(Path(out_dir) / "sweep_nk.csv", header, [[r[h] for h in header] for r in rows])
    return rows


def sweep_downsample(
    out_dir,
    rates=DOWNSAMPLE_RATES,
    preset="desk",
    seeds=None,
    workers: int = 1,
    cache_dir=None,
    losses=DOWNSAMPLE_LOSSES,
    mode: str = "uniform",
    mean_fns=MEAN_FUNCTIONS,
    stats: dict | None = None,
) -> list[dict]:
    """Relational losses trained on binomially thinned counts at each rate."""
    from ..errors import DomainError

    preset = get_preset(preset)
    rates = [float(r) for r in rates]
    if any(not 0.0 <= r <= 1.0 for r in rates):
        raise DomainError("downsampling rates must lie in [0, 1]")
    cells = [
        Cell(synth_for(preset, mode, fn, s), LossSpec(kind), train_for(preset, s), downsample_rate=rate)
        for rate in rates
        for kind in losses
        for fn in mean_fns
        for s in _seeds(preset, seeds)
    ]
    results = run_cells(cells, workers, cache_dir)
    _record_stats(stats, results)
    rows = []
    for rate in rates:
        for kind in losses:
            mean, std = _mean_std(
                _seed_means(results, cells, lambda c: c.downsample_rate == rate and c.loss.kind == kind)
            )
            rows.append({"rate": rate, "loss": DISPLAY_NAMES[kind], "kind": kind, "mean_scc": mean, "std_scc": std})
    header = ["rate", "loss", "mean_scc", "std_scc"]
    _write_csv(Path(out_dir) / "sweep_downsample.csv", header, [[r[h] for h in header] for r in rows])
    return rows


def _apply_param(synth: SynthConfig, name: str, value: float) -> SynthConfig:
    if name == "dispersion":
        return synth.replace(dispersion=value)
    if name == "batch_effect":
        if value:
            return synth
        return synth.replace(tissues=tuple(replace(t, alpha=1.0, beta=0.0) for t in synth.tissues))
    tissues = list(synth.tissues)
    k = 0 if name.endswith("1") else 1
    field = "alpha" if name.startswith("alpha") else "beta"
    tissues[k] = replace(tissues[k], **{field: value})
    return synth.replace(tissues=tuple(tissues))


def sweep_params(
    out_dir,
    grid=None,
    preset="desk",
    seeds=None,
    workers: int = 1,
    cache_dir=None,
    losses=LOSS_KINDS,
    mode: str = "uniform",
    mean_fns=MEAN_FUNCTIONS,
    stats: dict | None = None,
) -> list[dict]:
    """One-at-a-time sweeps of batch-effect and dispersion parameters for every loss."""
    from ..errors import DomainError

    preset = get_preset(preset)
    grid = DEFAULT_PARAM_GRID if grid is None else grid
    for name, values in grid.items():
        if name not in SWEEPABLE:
            raise DomainError(f"cannot sweep {name!r}; choose from {SWEEPABLE}")
        for v in values:
            if name == "batch_effect":
                bad = v not in (0, 1)
            elif name.startswith("beta"):
                bad = v < 0
            else:
                bad = not v > 0
            if bad:
                raise DomainError(f"invalid value {v} for {name}")
    points = [(name, float(v)) for name, values in grid.items() for v in values]
    cells, tags = [], []
    for name, value in points:
        for kind in losses:
            for fn in mean_fns:
                for s in _seeds(preset, seeds):
                    synth = _apply_param(synth_for(preset, mode, fn, s), name, value)
                    cells.append(Cell(synth, LossSpec(kind), train_for(preset, s)))
                    tags.append((name, value))
    results = run_cells(cells, workers, cache_dir)
    _record_stats(stats, results)
    tag_of = {id(c): t for c, t in zip(cells, tags)}
    rows = []
    for name, value in points:
        for kind in losses:
            mean, std = _mean_std(
                _seed_means(results, cells, lambda c: tag_of[id(c)] == (name, value) and c.loss.kind == kind)
            )
            rows.append({"param": name, "value": value, "loss": DISPLAY_NAMES[kind], "kind": kind, "mean_scc": mean, "std_scc": std})
    header = ["param", "value", "loss", "mean_scc", "std_scc"]
    _write_csv(Path(out_dir) / "sweep_params.csv", header, [[r[h] for h in header] for r in rows])
    return rows


def load_experiment_data(config: ExperimentConfig, repeat: int):
    """``(train, val, test)`` for one repeat of a configured experiment."""
    if config.synth is not None:
        synth = config.synth.build()
        return generate_dataset(synth.replace(seed=synth.seed + repeat))
    ingest = config.ingest
    data = load_dataset(ingest.path)
    return split_by_tissue(data, ingest.train_tissues, ingest.val_tissue, ingest.test_tissue)


def run_experiment(config: ExperimentConfig, out_dir=None) -> dict:
    """Train ``config.repeats`` seeds and write per-seed reports plus an aggregate.

    Layout::

        out/config.json
        out/seed_<k>/{report.csv, summary.json, history.csv, model.ckpt}
        out/aggregate.csv, out/aggregate.json
    """
    out = Path(out_dir if out_dir is not None else (config.output_dir or "."))
    out.mkdir(parents=True, exist_ok=True)
    fingerprint = config.fingerprint()
    (out / "config.json").write_text(
        json.dumps(config.model_dump(mode="json", exclude={"output_dir"}), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    loss = config.loss.build()
    base_train = config.train.build()
    per_seed = []
    for k in range(config.repeats):
        train_set, val_set, test_set = load_experiment_data(config, k)
        if config.downsample_rate < 1.0:
            train_set = downsample_counts(train_set, config.downsample_rate, RngStream(base_train.seed + k, (9,)))
        tcfg = base_train.replace(seed=base_train.seed + k)
        params = init_params(
            train_set.input_dim,
            config.model.hidden_dim,
            train_set.n_genes,
            RngStream(tcfg.seed, (3,)),
            scheme=config.model.init,
        )
        val = val_set if tcfg.early_stop_patience is not None else None
        params, history = train(params, train_set, loss, tcfg, val=val)
        report = evaluate(params, test_set, fingerprint)
        report.history = history
        seed_dir = out / f"seed_{k}"
        report.write(seed_dir)
        save_params(params.astype(np.float64), seed_dir / "model.ckpt")
        per_seed.append(report.mean_scc)
    finite = [v for v in per_seed if not math.isnan(v)]
    mean, std = _mean_std(finite)
    _write_csv(out / "aggregate.csv", ["seed", "mean_scc"], [[k, v] for k, v in enumerate(per_seed)])
    aggregate = {
        "config_fingerprint": fingerprint,
        "mean_scc": None if math.isnan(mean) else mean,
        "std_scc": None if math.isnan(std) else std,
        "per_seed": [None if math.isnan(v) else v for v in per_seed],
    }
    (out / "aggregate.json").write_text(json.dumps(aggregate, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return aggregate


def evaluate_checkpoint(params, dataset, out_dir, fingerprint: str = "") -> Report:
    report = evaluate(params, dataset, fingerprint)
    report.write(out_dir)
    return report
