"""Contrastive InfoNCE over embedding similarities."""

from adrec import autodiff as ad
from adrec.autodiff import Tensor


def info_nce(anchor, positives, negatives, tau):
    """Multi-positive InfoNCE for one anchor.

    ``-log( sum_P exp(a.z_j / tau) / sum_{P u N} exp(a.z_k / tau) )``
    with the positives included in the denominator. Accepts numpy arrays
    or tensors; the result is an autodiff scalar.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    anchor = anchor if isinstance(anchor, Tensor) else Tensor(anchor)
    positives = positives if isinstance(positives, Tensor) else Tensor(positives)
    negatives = negatives if isinstance(negatives, Tensor) else Tensor(negatives)
    if positives.ndim != 2 or positives.shape[0] == 0:
        raise ValueError("need at least one positive")
    if negatives.ndim != 2 or negatives.shape[0] == 0:
        raise ValueError("need at least one negative")
    col = ad.reshape(anchor, (anchor.shape[-1], 1))
    pos_sims = ad.reshape(ad.matmul(positives, col), (positives.shape[0],))
    neg_sims = ad.reshape(ad.matmul(negatives, col), (negatives.shape[0],))
    all_sims = ad.mul(ad.concat([pos_sims, neg_sims], axis=0), 1.0 / tau)
    pos_scaled = ad.mul(pos_sims, 1.0 / tau)
    return ad.sub(ad.logsumexp(all_sims, axis=0), ad.logsumexp(pos_scaled, axis=0))
