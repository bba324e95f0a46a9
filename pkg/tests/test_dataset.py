import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from strank.dataset import Dataset, load_dataset, save_dataset, split_by_tissue
from strank.errors import ArgumentError, SchemaError


def make_dataset(n=6, d=2, g=3, tissues=(0, 0, 1, 1, 2, 2), seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(
        features=rng.normal(size=(n, d)),
        counts=rng.integers(0, 20, size=(n, g)),
        tissue_ids=np.array(tissues[:n]),
        provenance="unit test",
    )


def test_library_sizes():
    ds = Dataset(features=[[0.1]], counts=[[3, 0, 7]], tissue_ids=[0])
    assert ds.library_sizes.tolist() == [10]


def test_invariant_violations():
    with pytest.raises(SchemaError):
        Dataset(features=np.zeros((2, 1)), counts=np.zeros((3, 1), int), tissue_ids=[0, 0])
    with pytest.raises(SchemaError):
        Dataset(features=np.zeros((2, 1)), counts=[[1], [-1]], tissue_ids=[0, 0])
    with pytest.raises(SchemaError):
        Dataset(features=np.zeros((2, 1)), counts=[[1], [1]], tissue_ids=[0, 2])


def test_round_trip(tmp_path):
    ds = make_dataset()
    save_dataset(ds, tmp_path / "d")
    assert load_dataset(tmp_path / "d") == ds


def test_round_trip_with_targets_and_names(tmp_path):
    ds = make_dataset()
    ds = Dataset(ds.features, ds.counts, ds.tissue_ids, gene_names=["A", "B", "C"], targets=ds.counts * 0.5)
    save_dataset(ds, tmp_path)
    assert load_dataset(tmp_path) == ds


def test_byte_identical_saves(tmp_path):
    ds = make_dataset()
    save_dataset(ds, tmp_path / "a")
    save_dataset(ds, tmp_path / "b")
    for name in ("features.csv", "counts.csv", "tissues.csv", "meta.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert b"\r" not in (tmp_path / "a" / "features.csv").read_bytes()


def test_empty_gene_dataset(tmp_path):
    ds = Dataset(features=np.zeros((3, 1)), counts=np.zeros((3, 0), int), tissue_ids=[0, 0, 0])
    save_dataset(ds, tmp_path)
    assert (tmp_path / "counts.csv").read_text() == "\n"
    assert load_dataset(tmp_path) == ds


def test_wrong_width_row_named(tmp_path):
    save_dataset(make_dataset(), tmp_path)
    lines = (tmp_path / "counts.csv").read_text().splitlines()
    lines[3] = "1,2"
    (tmp_path / "counts.csv").write_text("\n".join(lines) + "\n")
    with pytest.raises(SchemaError, match="row 4"):
        load_dataset(tmp_path)


@pytest.mark.parametrize("bad", ["-1", "2.5", "x"])
def test_bad_count_values(tmp_path, bad):
    save_dataset(make_dataset(), tmp_path)
    lines = (tmp_path / "counts.csv").read_text().splitlines()
    lines[1] = f"{bad},1,1"
    (tmp_path / "counts.csv").write_text("\n".join(lines) + "\n")
    with pytest.raises(SchemaError):
        load_dataset(tmp_path)


def test_missing_file(tmp_path):
    save_dataset(make_dataset(), tmp_path)
    (tmp_path / "tissues.csv").unlink()
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path)


def test_row_count_mismatch(tmp_path):
    save_dataset(make_dataset(), tmp_path)
    meta = json.loads((tmp_path / "meta.json").read_text())
    meta["n_spots"] = 7
    (tmp_path / "meta.json").write_text(json.dumps(meta))
    with pytest.raises(SchemaError):
        load_dataset(tmp_path)


@settings(max_examples=40, deadline=None)
@given(
    features=hnp.arrays(np.float64, (5, 2), elements=st.floats(allow_nan=False, allow_infinity=False)),
    counts=hnp.arrays(np.int64, (5, 2), elements=st.integers(0, 10**12)),
)
def test_round_trip_property(tmp_path_factory, features, counts):
    ds = Dataset(features=features, counts=counts, tissue_ids=[0, 1, 0, 1, 1])
    path = tmp_path_factory.mktemp("rt")
    save_dataset(ds, path)
    assert load_dataset(path) == ds


def test_split_by_tissue():
    ds = make_dataset()
    train, val, test = split_by_tissue(ds, {0}, 1, 2)
    assert (train.n_spots, val.n_spots, test.n_spots) == (2, 2, 2)
    assert np.array_equal(train.features, ds.features[:2])
    assert set(val.tissue_ids.tolist()) == {0} and set(test.tissue_ids.tolist()) == {0}


def test_split_reindexes_and_partitions():
    ds = make_dataset(n=8, tissues=(0, 1, 2, 3, 0, 1, 2, 3))
    train, val, test = split_by_tissue(ds, {0, 2}, 1, 3)
    assert sorted(set(train.tissue_ids.tolist())) == [0, 1]
    assert train.n_spots + val.n_spots + test.n_spots == ds.n_spots
    rows = np.concatenate([train.features[:, 0], val.features[:, 0], test.features[:, 0]])
    assert np.array_equal(np.sort(rows), np.sort(ds.features[:, 0]))


def test_split_errors():
    ds = make_dataset()
    with pytest.raises(ArgumentError):
        split_by_tissue(ds, {0, 1}, None, None)
    with pytest.raises(ArgumentError):
        split_by_tissue(ds, {0, 1}, 1, 2)
    with pytest.raises(ArgumentError):
        split_by_tissue(ds, {0}, 1, 9)
