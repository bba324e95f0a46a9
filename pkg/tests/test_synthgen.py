import math

import numpy as np
import pytest

from strank.errors import DomainError
from strank.sampling import RngStream
from strank.synthgen import (
    MEAN_FUNCTIONS,
    MeanFnParams,
    SynthConfig,
    TissueBatchParams,
    downsample_counts,
    generate_dataset,
    generate_tissue,
    mean_function,
)


def small_config(**kw):
    base = dict(n_train_per_tissue=2000, n_val=500, n_test=500, seed=3)
    base.update(kw)
    return SynthConfig(**base)


def test_mean_function_values():
    p = MeanFnParams(2.0, 1.0, 6.0, 20.0)
    assert mean_function(0.0, p) == 3.0
    assert mean_function(0.37, MeanFnParams(0.0, 0.0, 5.0, 7.0)) == 0.0
    # 2 sin 3 + sin 10 + 3, evaluated with mpmath at 40 digits
    assert mean_function(0.5, p) == pytest.approx(2.738218905230364630796742, abs=1e-14)


def test_mean_function_domain():
    with pytest.raises(DomainError):
        mean_function(1.5, MEAN_FUNCTIONS[0])
    with pytest.raises(DomainError):
        mean_function(np.array([0.2, -0.1]), MEAN_FUNCTIONS[0])


@pytest.mark.parametrize("params", MEAN_FUNCTIONS)
def test_mean_function_non_negative(params):
    x = np.linspace(0, 1, 10_001)
    assert np.all(mean_function(x, params) >= 0)


def test_zero_mean_tissue_all_zero():
    cfg = small_config(mean_fn=MeanFnParams(0, 0, 1, 1), tissues=[TissueBatchParams(1.0, 0.0)])
    _, e = generate_tissue(cfg, 0, 1000, RngStream(0))
    assert np.all(e == 0)


def test_imbalanced_interval():
    cfg = small_config(mode="imbalanced")
    x, _ = generate_tissue(cfg, 1, 5000, RngStream(0))
    assert x.max() <= 0.5
    x_uniform, _ = generate_tissue(small_config(), 1, 5000, RngStream(0))
    assert x_uniform.min() >= 0 and x_uniform.max() <= 1 and x_uniform.max() > 0.9


def test_tissue_index_out_of_range():
    with pytest.raises(DomainError):
        generate_tissue(small_config(), 2, 10, RngStream(0))


def test_binned_means_track_mean_function():
    cfg = SynthConfig(tissues=[TissueBatchParams(1.0, 0.0)], dispersion=1e6)
    x, e = generate_tissue(cfg, 0, 1_000_000, RngStream(8))
    bins = np.minimum((x * 20).astype(int), 19)
    for b in range(20):
        sel = bins == b
        # oracle: average of mu over the drawn x in the bin
        expected = mean_function(x[sel], cfg.mean_fn).mean()
        assert abs(e[sel].mean() - expected) / expected < 0.03


def test_generate_dataset_shapes():
    cfg = SynthConfig(n_train_per_tissue=50_000, n_val=1000, n_test=700)
    train, val, test = generate_dataset(cfg)
    assert train.n_spots == 100_000
    assert set(np.unique(train.tissue_ids).tolist()) == {0, 1}
    assert val.n_spots == 1000 and test.n_spots == 700
    np.testing.assert_array_equal(test.targets[:, 0], mean_function(test.features[:, 0], cfg.mean_fn))


def test_batch_effect_raises_counts():
    train, _, _ = generate_dataset(small_config())
    m0 = train.counts[train.tissue_ids == 0].mean()
    m1 = train.counts[train.tissue_ids == 1].mean()
    assert m1 > m0


def test_generate_dataset_deterministic():
    a = generate_dataset(small_config())
    b = generate_dataset(small_config())
    for x, y in zip(a, b):
        assert x == y
    c = generate_dataset(small_config(seed=4))
    assert not np.array_equal(a[0].counts, c[0].counts)


def test_counts_non_negative_integers():
    train, val, test = generate_dataset(small_config(mode="imbalanced"))
    for ds in (train, val, test):
        assert ds.counts.dtype == np.int64 and ds.counts.min() >= 0


def test_downsample_edges():
    train, _, _ = generate_dataset(small_config())
    assert downsample_counts(train, 1.0, RngStream(0)) == train
    assert np.all(downsample_counts(train, 0.0, RngStream(0)).counts == 0)
    with pytest.raises(DomainError):
        downsample_counts(train, 1.2, RngStream(0))


def test_downsample_total_concentration():
    train, _, _ = generate_dataset(small_config(n_train_per_tissue=20_000))
    total = train.counts.sum()
    thinned = downsample_counts(train, 0.1, RngStream(5))
    assert abs(thinned.counts.sum() - 0.1 * total) <= 3 * math.sqrt(0.09 * total)
    assert np.array_equal(thinned.features, train.features)
    assert np.array_equal(thinned.tissue_ids, train.tissue_ids)


def test_downsample_composition():
    train, _, _ = generate_dataset(small_config(n_train_per_tissue=20_000))
    p, q = 0.5, 0.2
    twice = downsample_counts(downsample_counts(train, p, RngStream(1)), q, RngStream(2))
    once = downsample_counts(train, p * q, RngStream(3))
    total = train.counts.sum()
    # each total is Binomial(total, pq); the difference has variance 2 * T pq (1 - pq)
    sigma = math.sqrt(2 * total * p * q * (1 - p * q))
    assert abs(int(twice.counts.sum()) - int(once.counts.sum())) <= 5 * sigma
