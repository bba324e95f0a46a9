"""Independent reference implementations shared by unit and acceptance tests."""

import itertools
import math

import numpy as np


def centered_ranks_by_concordance(x):
    """Twice the centred average rank: ``sum_j sign(x_i - x_j)``.

    For average ranks with ties, ``rank_i - (n + 1) / 2`` equals half the net
    number of observations below ``x_i``, so no sorting is involved.
    """
    x = np.asarray(x)
    return np.sign(x[:, None] - x[None, :]).sum(axis=1)


def concordance_spearman(x, y):
    cx = centered_ranks_by_concordance(x).astype(np.int64)
    cy = centered_ranks_by_concordance(y).astype(np.int64)
    sxx, syy, sxy = int(cx @ cx), int(cy @ cy), int(cx @ cy)
    if sxx == 0 or syy == 0:
        return math.nan
    return sxy / math.sqrt(sxx * syy)


def ternary_grid(n):
    return np.array(list(itertools.product((0, 1, 2), repeat=n)), dtype=np.int64)
