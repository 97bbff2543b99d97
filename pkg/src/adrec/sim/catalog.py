"""Synthetic catalog and user generation.

Item embeddings are drawn around a set of Gaussian cluster centers. A
configurable fraction of items form groups with byte-identical
embeddings but distinct account ids, which is exactly the situation the
hashed final token level exists to disambiguate.
"""

from dataclasses import dataclass

import numpy as np

from adrec.quantizer.residual import Item


@dataclass
class SyntheticUser:
    user_id: str
    interest: np.ndarray
    value_tier: float
    activity_rate: float

    def __post_init__(self):
        self.interest = np.asarray(self.interest, dtype=np.float64)
        if not np.isfinite(self.interest).all() or self.activity_rate <= 0:
            raise ValueError("user interest must be finite, activity_rate > 0")


def _cluster_centers(n_clusters, d_e, rng):
    return rng.normal(0.0, 1.0, size=(n_clusters, d_e))


def gen_catalog(n_items, d_e, seed=0, n_clusters=12, dup_fraction=0.0,
                dup_copies=4, noise=0.25):
    """Deterministically generate ``n_items`` items.

    ``dup_fraction`` of the items (rounded down to whole groups of
    ``dup_copies``) share embeddings within their group while keeping
    distinct account ids.
    """
    rng = np.random.default_rng(seed)
    centers = _cluster_centers(n_clusters, d_e, rng)
    items = []
    n_dup_items = int(n_items * dup_fraction) // dup_copies * dup_copies
    n_groups = n_dup_items // dup_copies
    serial = 0

    def make(embedding):
        nonlocal serial
        item = Item(
            item_id=f"item{serial:06d}",
            embedding=embedding,
            non_semantic={
                "account_id": int(rng.integers(1, 10_000_000)),
                "conversion_type": int(rng.integers(0, 5)),
            },
            latent_value=float(rng.uniform(0.0, 1.0)),
        )
        serial += 1
        return item

    for _ in range(n_groups):
        center = centers[rng.integers(0, n_clusters)]
        emb = center + rng.normal(0.0, noise, size=d_e)
        for _ in range(dup_copies):
            items.append(make(emb.copy()))
    while len(items) < n_items:
        center = centers[rng.integers(0, n_clusters)]
        items.append(make(center + rng.normal(0.0, noise, size=d_e)))
    return items


def gen_users(n_users, catalog, seed=0, interest_noise=0.2):
    """Users whose interests sit near real item embeddings, so affinity
    structure exists for the feedback model to expose."""
    rng = np.random.default_rng(seed)
    tiers = np.array([1.0, 2.0, 4.0])
    users = []
    for u in range(n_users):
        anchor = catalog[int(rng.integers(0, len(catalog)))].embedding
        interest = anchor + rng.normal(0.0, interest_noise, size=anchor.shape)
        interest = interest / max(np.linalg.norm(interest), 1e-12)
        users.append(SyntheticUser(
            user_id=f"user{u:04d}",
            interest=interest,
            value_tier=float(tiers[int(rng.integers(0, 3))]),
            activity_rate=float(rng.uniform(0.5, 2.0)),
        ))
    return users
