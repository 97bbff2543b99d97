"""Pure-numpy reference implementations of the compiled kernels."""

import numpy as np


def greedy_balanced_assign(dists, order, floor_cap, bonus_total):
    """Assign each point to its nearest cluster under balanced capacities.

    Points are processed in the given order. Every cluster accepts up to
    ``floor_cap`` points unconditionally; at most ``bonus_total`` clusters
    may take one extra point. Ties on distance go to the lowest cluster
    index.

    Parameters
    ----------
    dists : (n, k) float64 array of point-to-centroid squared distances.
    order : (n,) int64 array, a permutation giving the processing order.
    floor_cap : base capacity per cluster (``n // k``).
    bonus_total : number of clusters allowed one extra point (``n % k``).

    Returns
    -------
    (n,) int64 array of cluster indices.
    """
    n, k = dists.shape
    sizes = np.zeros(k, dtype=np.int64)
    out = np.empty(n, dtype=np.int64)
    bonus_used = 0
    for p in order:
        open_mask = sizes < floor_cap
        if bonus_used < bonus_total:
            open_mask |= sizes == floor_cap
        row = np.where(open_mask, dists[p], np.inf)
        best = int(row.argmin())
        if sizes[best] == floor_cap:
            bonus_used += 1
        sizes[best] += 1
        out[p] = best
    return out


def nearest_centroid(points, centroids):
    """Index of the nearest centroid per point; ties go to the lowest index."""
    diff = points[:, None, :] - centroids[None, :, :]
    d2 = np.einsum("nkd,nkd->nk", diff, diff)
    return d2.argmin(axis=1).astype(np.int64)
