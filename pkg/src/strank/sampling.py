"""Seedable random streams and the few distributions the experiments need.

Streams are backed by numpy's PCG64 bit generator. Its constants are fixed
by the PCG64 reference definition, so a given ``(seed, stream_id)`` yields the
same sequence on every platform for a given numpy release.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError

MAX_DERANGE_RETRIES = 100


class RngStream:
    """A single-owner random stream identified by ``(seed, stream_id)``.

    Child streams are derived through ``SeedSequence`` spawn keys, so two
    streams with different ids never share state.
    """

    def __init__(self, seed: int, stream_id: tuple[int, ...] = ()):
        if seed < 0 or seed >= 2**64:
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self.stream_id = tuple(int(s) for s in stream_id)
        seq = np.random.SeedSequence(self.seed, spawn_key=self.stream_id)
        self.generator = np.random.Generator(np.random.PCG64(seq))

    def child(self, *stream_id: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id + tuple(stream_id))

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size=size, dtype=np.int64)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.generator.normal(loc, scale, size)

    def permutation(self, n):
        return self.generator.permutation(n)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def nb_sample(mean, dispersion, rng: RngStream, size=None):
    """Draw negative binomial counts with the given mean and dispersion.

    The variance is ``mean + mean**2 / dispersion``. Sampling goes through the
    gamma-Poisson mixture: ``lam ~ Gamma(dispersion, mean / dispersion)`` and
    then ``count ~ Poisson(lam)``. A zero mean always gives a zero count.

    ``mean`` may be an array; ``size`` broadcasts as in numpy.
    """
    mean = np.asarray(mean, dtype=np.float64)
    if np.any(~np.isfinite(mean)) or np.any(mean < 0):
        raise DomainError("negative binomial mean must be finite and >= 0")
    if not dispersion > 0 or not np.isfinite(dispersion):
        raise DomainError(f"dispersion must be positive, got {dispersion}")
    if size is not None:
        mean = np.broadcast_to(mean, size)
    lam = rng.generator.gamma(dispersion, mean / dispersion)
    counts = np.asarray(rng.generator.poisson(lam), dtype=np.int64)
    if counts.ndim == 0:
        return int(counts)
    return counts


def binomial_sample(n, p, rng: RngStream, size=None):
    """Binomial thinning: keep each of ``n`` units with probability ``p``."""
    p_arr = np.asarray(p, dtype=np.float64)
    if np.any(~(p_arr >= 0)) or np.any(~(p_arr <= 1)):
        raise DomainError(f"probability must lie in [0, 1], got {p}")
    n_arr = np.asarray(n)
    if np.any(n_arr < 0):
        raise DomainError("binomial trial count must be >= 0")
    out = np.asarray(rng.generator.binomial(n_arr.astype(np.int64), p_arr, size=size), dtype=np.int64)
    if out.ndim == 0:
        return int(out)
    return out


def grouped_permutation(tissue_ids, rng: RngStream, derange: bool = True) -> np.ndarray:
    """Shuffle indices within each tissue block.

    Returns ``perm`` with ``tissue_ids[perm[i]] == tissue_ids[i]``. With
    ``derange`` the shuffle of every block is redrawn until it has no fixed
    point, so no sample is paired with itself; the result is uniform over
    derangements of each block.
    """
    tissue_ids = np.asarray(tissue_ids)
    n = tissue_ids.shape[0]
    perm = np.arange(n)
    for tissue in np.unique(tissue_ids):
        idx = np.flatnonzero(tissue_ids == tissue)
        if idx.size < 2:
            raise DomainError(f"tissue {tissue} has a single sample and cannot be paired")
        for _ in range(MAX_DERANGE_RETRIES):
            shuffled = idx[rng.permutation(idx.size)]
            if not derange or not np.any(shuffled == idx):
                break
        else:
            raise RuntimeError(
                f"no fixed-point-free shuffle of tissue {tissue} after {MAX_DERANGE_RETRIES} draws"
            )
        perm[idx] = shuffled
    return perm
