"""Codebook quality metrics over an item -> semantic-ID assignment."""

from collections import Counter

import numpy as np


def sid_metrics(assignments, level_vocab_sizes):
    """Compression ratio, collision rate, and codebook utilization.

    * ``cpr``: items per distinct ID (1.0 means lossless identification).
    * ``col``: fraction of distinct IDs carrying more than one item.
    * ``util``: items per slot of the full codebook space (the product of
      the level sizes). Note this depends only on catalog size and the
      configured space, not on how items were assigned; implemented as
      defined.

    ``assignments`` maps item_id -> SemanticId (or any hashable token key).
    """
    if not assignments:
        raise ValueError("assignments must be nonempty")
    counts = Counter(assignments.values())
    n_items = len(assignments)
    n_sids = len(counts)
    one_on_one = sum(1 for c in counts.values() if c == 1)
    space = float(np.prod([float(s) for s in level_vocab_sizes]))
    return (
        n_items / n_sids,
        1.0 - one_on_one / n_sids,
        n_items / space,
    )
