"""Loss functions over a mini-batch of count targets and model outputs.

Every loss takes the integer count matrix ``E`` (batch x genes) and the model
output ``R`` of the same shape, and returns ``(value, dL/dR)``. Values are
computed in float64; the gradient is returned in ``R``'s dtype.

Relational losses also take an index structure built from the batch:
``pairs`` is an ``(n_pairs, 2)`` array of row positions, ``groups`` a list of
row-position arrays. All members of a pair or group must share a tissue.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import ArgumentError, DomainError

LOG_CLAMP = 30.0
PCC_MIN_VAR = 1e-12

POINTWISE = ("mse", "poisson", "nb", "pcc")
PAIRWISE = ("rank", "pair_strank")
LISTWISE = ("list_strank",)
LOSS_KINDS = POINTWISE[:3] + ("rank", "pair_strank", "pcc", "list_strank")

DISPLAY_NAMES = {
    "mse": "MSE",
    "poisson": "Poisson",
    "nb": "NB",
    "rank": "Rank",
    "pair_strank": "PairSTRank",
    "pcc": "PCC",
    "list_strank": "ListSTRank",
}


@dataclass(frozen=True)
class LossSpec:
    kind: str
    margin: float = 1.0
    nb_dispersion: float = 2.0
    list_size: int = 256
    size_correction: bool = False

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise DomainError(f"unknown loss kind {self.kind!r}; expected one of {LOSS_KINDS}")
        if self.margin < 0:
            raise DomainError("rank margin must be >= 0")
        if not self.nb_dispersion > 0:
            raise DomainError("NB dispersion must be positive")
        if self.list_size < 2:
            raise DomainError("list size must be >= 2")

    @property
    def structure(self) -> str:
        if self.kind in PAIRWISE:
            return "pairs"
        if self.kind in LISTWISE:
            return "groups"
        return "none"


def _check(E, R):
    E = np.asarray(E)
    R = np.asarray(R)
    if E.shape != R.shape or E.ndim != 2:
        raise ArgumentError(f"counts shape {E.shape} and prediction shape {R.shape} must match (2-D)")
    return E.astype(np.float64), R


def mse_loss(E, R):
    E, R = _check(E, R)
    diff = R.astype(np.float64) - E
    value = float(np.mean(diff**2)) if diff.size else 0.0
    grad = 2.0 * diff / max(diff.size, 1)
    return value, grad.astype(R.dtype)


def _log_rate(R):
    r = R.astype(np.float64)
    clipped = np.clip(r, -LOG_CLAMP, LOG_CLAMP)
    inside = (r > -LOG_CLAMP) & (r < LOG_CLAMP)
    return clipped, inside


def poisson_loss(E, R):
    """Poisson negative log-likelihood with an exponential link (``log e!`` dropped)."""
    E, R = _check(E, R)
    log_lam, inside = _log_rate(R)
    lam = np.exp(log_lam)
    n = max(E.size, 1)
    value = float(np.sum(lam - E * log_lam) / n)
    grad = np.where(inside, lam - E, 0.0) / n
    return value, grad.astype(R.dtype)


def nb_loss(E, R, dispersion: float = 2.0):
    """Negative binomial NLL with mean ``exp(R)`` and fixed dispersion."""
    if not dispersion > 0:
        raise DomainError(f"NB dispersion must be positive, got {dispersion}")
    E, R = _check(E, R)
    r = float(dispersion)
    log_mu, inside = _log_rate(R)
    log_r_mu = np.logaddexp(np.log(r), log_mu)  # log(r + mu)
    loglik = (
        gammaln(E + r)
        - gammaln(r)
        - gammaln(E + 1.0)
        + r * (np.log(r) - log_r_mu)
        + E * (log_mu - log_r_mu)
    )
    n = max(E.size, 1)
    value = float(-np.sum(loglik) / n)
    # d/dR = r (mu - e) / (r + mu)
    p = np.exp(log_mu - log_r_mu)  # mu / (r + mu)
    grad = np.where(inside, r * p - E * (1.0 - p), 0.0) / n
    return value, grad.astype(R.dtype)


def _as_pairs(pairs, n_rows):
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if pairs.size and (pairs.min() < 0 or pairs.max() >= n_rows):
        raise ArgumentError("pair index out of range")
    return pairs


def _scatter_rows(n_rows, rows, values):
    """Sum ``values[k]`` into output row ``rows[k]`` (deterministic order)."""
    out = np.zeros((n_rows, values.shape[1]), dtype=np.float64)
    for g in range(values.shape[1]):
        out[:, g] = np.bincount(rows, weights=values[:, g], minlength=n_rows)
    return out


def rank_loss(E, R, pairs, margin: float = 1.0):
    """Pairwise hinge ``max(0, r_j - r_i + margin)`` for each pair with ``e_i > e_j``.

    Pairs are oriented per gene by their counts; tied counts are skipped. The
    value is the mean over contributing (pair, gene) terms.
    """
    E, R = _check(E, R)
    pairs = _as_pairs(pairs, E.shape[0])
    grad = np.zeros(R.shape, dtype=np.float64)
    if pairs.shape[0] == 0:
        return 0.0, grad.astype(R.dtype)
    i, j = pairs[:, 0], pairs[:, 1]
    Rf = R.astype(np.float64)
    sign = np.sign(E[i] - E[j])
    n_active = int(np.count_nonzero(sign))
    if n_active == 0:
        return 0.0, grad.astype(R.dtype)
    hinge = margin - sign * (Rf[i] - Rf[j])
    hot = (sign != 0) & (hinge > 0)
    value = float(np.sum(np.where(hot, hinge, 0.0)) / n_active)
    g = np.where(hot, -sign, 0.0) / n_active
    grad = _scatter_rows(E.shape[0], np.concatenate([i, j]), np.concatenate([g, -g]))
    return value, grad.astype(R.dtype)


def pair_strank_loss(E, R, pairs):
    """Binomial NLL of ``e_i`` out of ``e_i + e_j`` with a two-way softmax of scores.

    Per pair and gene the term is ``e_i softplus(r_j - r_i) + e_j softplus(r_i - r_j)``;
    it is summed over genes and averaged over pairs.
    """
    E, R = _check(E, R)
    pairs = _as_pairs(pairs, E.shape[0])
    grad = np.zeros(R.shape, dtype=np.float64)
    n_pairs = pairs.shape[0]
    if n_pairs == 0:
        return 0.0, grad.astype(R.dtype)
    i, j = pairs[:, 0], pairs[:, 1]
    Rf = R.astype(np.float64)
    ei, ej = E[i], E[j]
    gap = Rf[i] - Rf[j]
    value = float(np.sum(ei * np.logaddexp(0.0, -gap) + ej * np.logaddexp(0.0, gap)) / n_pairs)
    p_i = 0.5 * (1.0 + np.tanh(0.5 * gap))  # sigmoid(gap), overflow-free
    g_i = -(ei - (ei + ej) * p_i) / n_pairs
    grad = _scatter_rows(E.shape[0], np.concatenate([i, j]), np.concatenate([g_i, -g_i]))
    return value, grad.astype(R.dtype)


def pad_groups(groups, n_rows):
    """Stack variable-length groups into an index matrix plus a validity mask."""
    groups = [np.asarray(g, dtype=np.int64) for g in groups]
    if not groups:
        return np.zeros((0, 2), dtype=np.int64), np.zeros((0, 2), dtype=bool)
    width = max(g.size for g in groups)
    index = np.zeros((len(groups), width), dtype=np.int64)
    mask = np.zeros((len(groups), width), dtype=bool)
    for k, g in enumerate(groups):
        if g.size < 2:
            raise ArgumentError(f"group {k} has {g.size} member(s); listwise groups need >= 2")
        if g.min() < 0 or g.max() >= n_rows:
            raise ArgumentError("group index out of range")
        index[k, : g.size] = g
        mask[k, : g.size] = True
    return index, mask


def list_strank_loss(E, R, groups, size_correction: bool = False, library_sizes=None):
    """Multinomial NLL of each group's counts given a softmax over the group's scores.

    With ``size_correction`` the softmax logits are shifted by ``log l`` where
    ``l`` is each spot's library size; spots with ``l == 0`` are left out of the
    normalization. The summed loss is divided by the number of groups.
    """
    E, R = _check(E, R)
    grad = np.zeros(R.shape, dtype=np.float64)
    index, mask = pad_groups(groups, E.shape[0])
    n_groups = index.shape[0]
    if n_groups == 0:
        return 0.0, grad.astype(R.dtype)
    member = mask[:, :, None]  # (groups, width, 1)
    logits = R.astype(np.float64)[index]  # (groups, width, genes)
    counts = np.where(member, E[index], 0.0)
    if size_correction:
        if library_sizes is None:
            library_sizes = E.sum(axis=1)
        lib = np.asarray(library_sizes, dtype=np.float64)[index]
        member = member & (lib > 0)[:, :, None]
        with np.errstate(divide="ignore"):
            logits = logits + np.log(lib)[:, :, None]
    member = np.broadcast_to(member, logits.shape)
    logits = np.where(member, logits, -np.inf)
    top = np.max(logits, axis=1, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    shifted = logits - top
    with np.errstate(divide="ignore", invalid="ignore"):
        lse = np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))
        log_p = np.where(member, shifted - lse, 0.0)
    p = np.where(member, np.exp(log_p), 0.0)
    total = counts.sum(axis=1, keepdims=True)
    value = float(-np.sum(counts * log_p) / n_groups)
    g = -(counts - total * p) / n_groups
    grad = _scatter_rows(E.shape[0], index[mask], g[mask])
    return value, grad.astype(R.dtype)


def pcc_loss(E, R):
    """Mean over genes of ``1 - pearson(R[:, g], E[:, g])`` across the batch.

    A gene whose prediction or count column is (near) constant contributes 1
    with zero gradient.
    """
    E, R = _check(E, R)
    n = E.shape[0]
    if n < 2:
        raise ArgumentError("PCC loss needs a batch of at least 2")
    n_genes = max(E.shape[1], 1)
    Rf = R.astype(np.float64)
    rc = Rf - Rf.mean(axis=0)
    ec = E - E.mean(axis=0)
    ss_r = np.sum(rc**2, axis=0)
    ss_e = np.sum(ec**2, axis=0)
    ok = (ss_r / n >= PCC_MIN_VAR) & (ss_e / n >= PCC_MIN_VAR)
    norm_r = np.sqrt(np.where(ok, ss_r, 1.0))
    norm_e = np.sqrt(np.where(ok, ss_e, 1.0))
    rho = np.where(ok, np.sum(rc * ec, axis=0) / (norm_r * norm_e), 0.0)
    value = float(np.sum(1.0 - rho) / n_genes)
    drho = ec / (norm_r * norm_e) - rho * rc / norm_r**2
    grad = np.where(ok, -drho, 0.0) / n_genes
    return value, grad.astype(R.dtype)


def compute_loss(spec: LossSpec, E, R, pairs=None, groups=None, library_sizes=None):
    """Dispatch on ``spec.kind``; relational kinds need ``pairs`` or ``groups``."""
    kind = spec.kind
    if kind == "mse":
        return mse_loss(E, R)
    if kind == "poisson":
        return poisson_loss(E, R)
    if kind == "nb":
        return nb_loss(E, R, spec.nb_dispersion)
    if kind == "pcc":
        return pcc_loss(E, R)
    if kind == "rank":
        return rank_loss(E, R, pairs, spec.margin)
    if kind == "pair_strank":
        return pair_strank_loss(E, R, pairs)
    return list_strank_loss(E, R, groups, spec.size_correction, library_sizes)
