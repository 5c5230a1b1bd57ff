"""Two-sample statistics for the experiment battery.

Energy distance with a label-permutation null is the workhorse: the pooled
pairwise-distance matrix is computed once and every permutation statistic
is recovered from one quadratic form, so the permutations batch into a
single matrix product.  Pools larger than ``max_points`` per side are
subsampled (the p-value stays exact for the subsample).
"""

from __future__ import annotations

import numpy as np
from scipy.stats import ks_2samp

from .errors import DomainError, EmptySample

__all__ = [
    "energy_distance",
    "permutation_pvalue",
    "energy_permutation_test",
    "ks_per_coordinate",
]


def _as_2d(a) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise EmptySample("sample sets must be nonempty arrays of vectors")
    return arr


def _pairwise_distances(pool: np.ndarray) -> np.ndarray:
    sq = np.sum(pool**2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (pool @ pool.T)
    np.maximum(d2, 0.0, out=d2)
    return np.sqrt(d2)


def energy_distance(a, b) -> float:
    """Energy statistic 2 E|A-B| - E|A-A'| - E|B-B'| (V-statistic form).

    Zero exactly when the two samples coincide as multisets; O(n^2) in the
    pooled size.
    """
    a = _as_2d(a)
    b = _as_2d(b)
    if a.shape[1] != b.shape[1]:
        raise DomainError("samples must share the vector dimension")
    pool = np.concatenate([a, b])
    d = _pairwise_distances(pool)
    na = a.shape[0]
    dab = d[:na, na:].mean()
    daa = d[:na, :na].mean()
    dbb = d[na:, na:].mean()
    return float(2.0 * dab - daa - dbb)


def energy_permutation_test(a, b, n_perm: int, rng, max_points: int = 2500):
    """Energy statistic and its label-permutation p-value.

    Returns (statistic, pvalue, null_sd).  The p-value uses the add-one
    convention, so it is a valid level for any n_perm; n_perm >= 200 is
    required.  Larger samples are subsampled to max_points per side with
    draws from rng, keeping the whole test reproducible.
    """
    if n_perm < 200:
        raise DomainError("need n_perm >= 200")
    a = _as_2d(a)
    b = _as_2d(b)
    if a.shape[1] != b.shape[1]:
        raise DomainError("samples must share the vector dimension")
    if a.shape[0] > max_points:
        a = a[np.asarray(rng.permutation(a.shape[0]))[:max_points]]
    if b.shape[0] > max_points:
        b = b[np.asarray(rng.permutation(b.shape[0]))[:max_points]]
    na, nb = a.shape[0], b.shape[0]
    pool = np.concatenate([a, b])
    d = _pairwise_distances(pool)
    rowsum = d.sum(axis=1)
    total = rowsum.sum()

    def stat_from_membership(z):
        # z: (npool, m) 0/1 indicators of group-A membership
        s_aa = np.einsum("im,im->m", z, d @ z)
        s_arow = rowsum @ z
        s_ab = s_arow - s_aa
        s_bb = total - 2.0 * s_ab - s_aa
        return 2.0 * s_ab / (na * nb) - s_aa / na**2 - s_bb / nb**2

    z_obs = np.zeros((na + nb, 1))
    z_obs[:na, 0] = 1.0
    observed = float(stat_from_membership(z_obs)[0])

    z_perm = np.zeros((na + nb, n_perm))
    for p in range(n_perm):
        idx = np.asarray(rng.permutation(na + nb))[:na]
        z_perm[idx, p] = 1.0
    null = stat_from_membership(z_perm)
    pvalue = float((1 + np.sum(null >= observed)) / (n_perm + 1))
    return observed, pvalue, float(null.std())


def permutation_pvalue(a, b, n_perm: int, rng, max_points: int = 2500) -> float:
    """p-value of the energy permutation test."""
    return energy_permutation_test(a, b, n_perm, rng, max_points)[1]


def ks_per_coordinate(a, b):
    """Two-sample KS p-value per ordered coordinate; returns array of p's."""
    a = _as_2d(a)
    b = _as_2d(b)
    if a.shape[1] != b.shape[1]:
        raise DomainError("samples must share the vector dimension")
    ps = []
    for k in range(a.shape[1]):
        if np.array_equal(a[:, k], b[:, k]):
            ps.append(1.0)
        else:
            ps.append(float(ks_2samp(a[:, k], b[:, k]).pvalue))
    return np.array(ps)
