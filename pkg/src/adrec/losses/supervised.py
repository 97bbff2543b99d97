"""Token-level supervised losses and value-bucket discretization."""

from dataclasses import dataclass, field

import numpy as np

from adrec import autodiff as ad


@dataclass
class TrainingSample:
    features: np.ndarray  # (S, feat_dim) context features
    tokens: tuple  # target semantic-ID tokens
    ecpm_value: float
    value_token: int
    w_user: float = 1.0
    w_behavior: float = 1.0
    source: str = "vsl"

    def __post_init__(self):
        if self.w_user <= 0 or self.w_behavior <= 0:
            raise ValueError("sample weights must be positive")
        if not np.isfinite(self.ecpm_value):
            raise ValueError("ecpm_value must be finite")

    @property
    def weight(self):
        return self.w_user * self.w_behavior


@dataclass
class EcpmBuckets:
    """Equiprobable value buckets. ``boundaries`` are strictly increasing
    cut points; bucket i is the left-closed interval [b_{i-1}, b_i).
    ``representatives`` carry the mean fitted value per bucket, used when a
    predicted bucket must be turned back into a value."""

    boundaries: np.ndarray
    n_buckets: int
    representatives: np.ndarray = field(default=None)

    @property
    def effective_buckets(self):
        return len(self.boundaries) + 1


def fit_ecpm_buckets(values, n_buckets):
    """Cut sorted values into ``n_buckets`` equally populated buckets.

    Boundaries sit at the midpoint between the order statistics adjacent
    to each cut, so fitted populations differ by at most one. Cuts that
    coincide (too few distinct values) are collapsed; the effective bucket
    count is then smaller than requested.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("cannot fit buckets on empty values")
    if n_buckets < 1:
        raise ValueError("n_buckets must be >= 1")
    v = np.sort(values)
    n = v.size
    boundaries = []
    for i in range(1, n_buckets):
        cut = (i * n) // n_buckets
        if cut < 1 or cut > n - 1:
            continue
        b = 0.5 * (v[cut - 1] + v[cut])
        if not boundaries or b > boundaries[-1]:
            boundaries.append(b)
    boundaries = np.asarray(boundaries)
    buckets = EcpmBuckets(boundaries, n_buckets)
    tokens = np.searchsorted(boundaries, values, side="right")
    reps = np.empty(buckets.effective_buckets)
    for b in range(buckets.effective_buckets):
        member = values[tokens == b]
        reps[b] = member.mean() if member.size else (
            boundaries[min(b, len(boundaries) - 1)] if len(boundaries) else v.mean())
    buckets.representatives = reps
    return buckets


def discretize_ecpm(buckets, value):
    """Bucket index containing ``value``; clamps outside the fitted range."""
    return int(np.searchsorted(buckets.boundaries, value, side="right"))


def _token_nll(logits, token):
    logp = ad.log_softmax(logits)
    return ad.mul(ad.tsum(ad.take_rows(logp, [int(token)])), -1.0)


def sid_loss(trace, targets):
    """Sum over levels of the negative log-likelihood of the target token."""
    total = None
    for t, tok in enumerate(targets):
        term = _token_nll(trace.head_logits[t], tok)
        total = term if total is None else ad.add(total, term)
    return total


def ecpm_loss(trace, value_token):
    """Negative log-likelihood of the value bucket at the extra step."""
    if trace.value_logits is None:
        raise ValueError("trace has no value step")
    return _token_nll(trace.value_logits, value_token)


def mtp_loss(trace, targets):
    """Cross-entropy of the trunk logits against the same targets.

    Because trunk states never pass through the fusion or the layers
    above the trunk, gradients reach only trunk layers, shared
    classifiers, position embeddings, and the context path.
    """
    total = None
    for t, tok in enumerate(targets):
        term = _token_nll(trace.trunk_logits[t], tok)
        total = term if total is None else ad.add(total, term)
    return total


def ntp_loss(trace, targets, value_token, lambda_e):
    loss = sid_loss(trace, targets)
    if lambda_e != 0.0:
        loss = ad.add(loss, ad.mul(ecpm_loss(trace, value_token), lambda_e))
    return loss


def vsl_loss(sample, trace, config):
    """Value-weighted supervised loss:
    ``w_user * w_behavior * (L_sid + lambda_e * L_value + lambda_mtp * L_trunk)``.
    """
    loss = ntp_loss(trace, sample.tokens, sample.value_token, config.lambda_e)
    if config.lambda_mtp != 0.0:
        loss = ad.add(loss, ad.mul(mtp_loss(trace, sample.tokens), config.lambda_mtp))
    return ad.mul(loss, sample.weight)
