"""Item co-occurrence weights from an interaction log."""

from collections import defaultdict
from itertools import combinations


def swing_like_cooccurrence(interactions):
    """Count, for each item pair, the distinct users who touched both.

    ``interactions`` is an iterable of ``(user, item)`` pairs. Returns a
    dict keyed by sorted item pair; pairs never co-viewed are absent
    (weight zero). Symmetric by construction.
    """
    items_by_user = defaultdict(set)
    for user, item in interactions:
        items_by_user[user].add(item)
    weights = defaultdict(int)
    for items in items_by_user.values():
        for a, b in combinations(sorted(items), 2):
            weights[(a, b)] += 1
    return dict(weights)


def pair_weight(weights, a, b):
    """Symmetric lookup into a ``swing_like_cooccurrence`` result."""
    if a == b:
        raise ValueError("co-occurrence is defined for distinct items")
    key = (a, b) if a <= b else (b, a)
    return weights.get(key, 0)
