"""Size-balanced k-means via greedy capacity-constrained assignment."""

import numpy as np

from adrec import _kernels


def _assign_balanced(points, centroids, backend=None):
    """One balanced assignment pass: cluster sizes end within one of each
    other. Points with the most to lose (largest best-to-runner-up distance
    gap) are placed first; each goes to its nearest cluster that still has
    capacity, ties to the lowest cluster index.
    """
    kern = _kernels if backend is None else _kernels.get_backend(backend)
    n, k = points.shape[0], centroids.shape[0]
    diff = points[:, None, :] - centroids[None, :, :]
    dists = np.ascontiguousarray(np.einsum("nkd,nkd->nk", diff, diff))
    if k == 1:
        return np.zeros(n, dtype=np.int64), dists
    part = np.partition(dists, 1, axis=1)
    gap = part[:, 1] - part[:, 0]
    order = np.argsort(-gap, kind="stable").astype(np.int64)
    assign = kern.greedy_balanced_assign(dists, order, n // k, n % k)
    return assign, dists


def _update_centroids(points, assign, k, old_centroids):
    centroids = old_centroids.copy()
    for c in range(k):
        members = points[assign == c]
        if len(members):
            centroids[c] = members.mean(axis=0)
        else:
            # Unreachable for n >= k (balanced capacities fill every
            # cluster); reseed defensively with the worst-quantized point.
            residual = points - old_centroids[assign]
            centroids[c] = points[np.einsum("nd,nd->n", residual, residual).argmax()]
    return centroids


def balanced_kmeans(points, k, max_iters=50, seed=0, n_init=4, backend=None):
    """Cluster points into k groups whose sizes differ by at most one.

    Runs ``n_init`` deterministic restarts of greedy-balanced Lloyd
    iterations and keeps the lowest-SSE result. Final centroids are the
    exact means of their assigned points.

    Returns ``(centroids, assignments)`` with shapes ``(k, d)`` and ``(n,)``.

    Raises ``ValueError`` on empty input, ``k < 1``, or ``k > len(points)``.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise ValueError("points must be a nonempty (n, d) array")
    if not np.isfinite(points).all():
        raise ValueError("points must be finite")
    n = points.shape[0]
    if k < 1 or k > n:
        raise ValueError(f"k must be in [1, {n}], got {k}")

    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, n_init)):
        centroids = points[rng.choice(n, size=k, replace=False)].copy()
        assign = None
        for _ in range(max(1, max_iters)):
            new_assign, _ = _assign_balanced(points, centroids, backend)
            if assign is not None and np.array_equal(new_assign, assign):
                break
            assign = new_assign
            centroids = _update_centroids(points, assign, k, centroids)
        centroids = _update_centroids(points, assign, k, centroids)
        residual = points - centroids[assign]
        sse = float(np.einsum("nd,nd->", residual, residual))
        if best is None or sse < best[0]:
            best = (sse, centroids, assign)
    return best[1], best[2]
