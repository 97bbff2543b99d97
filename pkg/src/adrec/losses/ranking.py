"""Gain/discount ranking utilities shared by the preference loss and the
simulation's list-quality metric."""

import numpy as np


def _discount(rank):
    """Positional discount for a 1-based rank."""
    return np.log2(1.0 + rank)


def ideal_dcg(rewards):
    """DCG of the best possible ordering (descending rewards)."""
    v = np.sort(np.asarray(rewards, dtype=np.float64))[::-1]
    ranks = np.arange(1, v.size + 1)
    return float(np.sum((np.exp2(v) - 1.0) / _discount(ranks)))


def ndcg(rewards_in_display_order):
    """Normalized DCG of a list shown in the given order.

    Degenerate lists (all rewards zero, so the ideal DCG is zero) score
    1.0 by convention: there is nothing to misrank.
    """
    v = np.asarray(rewards_in_display_order, dtype=np.float64)
    if v.size == 0:
        raise ValueError("ndcg of an empty list")
    z = ideal_dcg(v)
    if z == 0.0:
        return 1.0
    ranks = np.arange(1, v.size + 1)
    return float(np.sum((np.exp2(v) - 1.0) / _discount(ranks)) / z)


def ndcg_cost(rewards, ranking):
    """Cost complement of NDCG: sum of normalized gains minus the NDCG of
    the displayed order. ``ranking[p]`` is the index (into ``rewards``) of
    the item displayed at position p. Zero for an ideal ranking; zero by
    convention when all rewards are zero.
    """
    v = np.asarray(rewards, dtype=np.float64)
    ranking = np.asarray(ranking, dtype=np.int64)
    if sorted(ranking.tolist()) != list(range(v.size)):
        raise ValueError("ranking must be a permutation of the reward indices")
    z = ideal_dcg(v)
    if z == 0.0:
        return 0.0
    gains = (np.exp2(v) - 1.0) / z
    return float(np.sum(gains) - ndcg(v[ranking]))


def normalized_gains(rewards_sorted_desc):
    """G_i = (2^v_i - 1) / Z for a reward-descending list; all in [0, 1]."""
    v = np.asarray(rewards_sorted_desc, dtype=np.float64)
    z = ideal_dcg(v)
    if z == 0.0:
        return np.zeros_like(v)
    return (np.exp2(v) - 1.0) / z


def lambda_weight(i, j, gains):
    """Pairwise rank-sensitivity weight for 1-based positions i != j in a
    reward-descending list:
    ``|1/D(|i-j|) - 1/D(|i-j|+1)| * |G_i - G_j|``.
    Symmetric in (i, j).
    """
    if i == j:
        raise ValueError("lambda_weight needs distinct positions")
    k = abs(i - j)
    pos_part = abs(1.0 / _discount(k) - 1.0 / _discount(k + 1))
    return float(pos_part * abs(gains[i - 1] - gains[j - 1]))
