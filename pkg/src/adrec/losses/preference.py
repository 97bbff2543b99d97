"""List-wise preference optimization over reward-ranked candidate lists.

For each candidate i, every candidate with a strictly lower reward forms
its "worse set". The loss term for i is

    log2(1 + sum_j M_ij * exp(g_j - g_i)),

where M_ij is the pairwise rank-sensitivity weight and g are scaled
policy scores, optionally anchored to a reference policy when the gate
decides the reference is present and close enough to be trusted. The sum
of these terms upper-bounds the NDCG cost of the ranking induced by g
(verified empirically in the test suite).
"""

import math
from dataclasses import dataclass

import numpy as np

from adrec import autodiff as ad
from adrec.autodiff import Tensor
from adrec.losses.ranking import normalized_gains, lambda_weight
from adrec.losses.supervised import mtp_loss, ntp_loss, vsl_loss

_LOG2 = math.log(2.0)


@dataclass
class LossConfig:
    beta: float = 1.0  # preference strength on log-prob differences
    delta: float = 1.0  # reference-trust gate threshold
    w0: float = 1.0  # base scale of the unified weights
    z_max: float = 1.0  # cap of the preference-side weight
    lambda_e: float = 0.5  # value-token loss weight
    lambda_mtp: float = 0.3  # trunk auxiliary loss weight

    def __post_init__(self):
        if self.beta <= 0 or self.delta <= 0:
            raise ValueError("beta and delta must be positive")
        if min(self.w0, self.z_max, self.lambda_e, self.lambda_mtp) < 0:
            raise ValueError("weights must be nonnegative")


@dataclass
class CandidateList:
    """Candidates sorted by reward descending, with their policy scores.

    ``policy_logp`` entries may be floats or autodiff scalars (the latter
    when the loss must backpropagate into the model). ``ref_logp`` is
    either None or a per-candidate list where individual entries may be
    None (reference unavailable for that candidate).
    """

    tokens_list: list
    rewards: np.ndarray
    policy_logp: list
    ref_logp: list = None

    def __post_init__(self):
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        n = len(self.tokens_list)
        if n < 1 or len(self.policy_logp) != n:
            raise ValueError("need >= 1 candidates with matching policy log-probs")
        if self.ref_logp is not None and len(self.ref_logp) != n:
            raise ValueError("ref_logp length mismatch")
        if np.any(self.rewards[:-1] < self.rewards[1:]):
            raise ValueError("candidates must be sorted by reward descending")
        if not all(np.isfinite(self._logp_value(i)) for i in range(n)):
            raise ValueError("policy log-probs must be finite")

    @property
    def n(self):
        return len(self.tokens_list)

    def _logp_value(self, i):
        lp = self.policy_logp[i]
        return float(lp.data) if isinstance(lp, Tensor) else float(lp)

    def policy_values(self):
        return np.array([self._logp_value(i) for i in range(self.n)])

    def worse_set(self, i):
        """Indices with strictly lower reward than candidate i."""
        return [j for j in range(self.n) if self.rewards[j] < self.rewards[i]]


def ref_gate(clist, i, delta):
    """1 when the reference policy is usable for candidate i's pairs: it
    must be recorded for i and its whole worse set, and on average stay
    within ``delta`` of the current policy in absolute log-ratio
    (strictly)."""
    group = clist.worse_set(i) + [i]
    if clist.ref_logp is None:
        return 0
    refs = [clist.ref_logp[j] for j in group]
    if any(r is None for r in refs):
        return 0
    policy = clist.policy_values()
    mean_ratio = float(np.mean([abs(policy[j] - float(clist.ref_logp[j]))
                                for j in group]))
    return 1 if mean_ratio < delta else 0


def _as_scalar_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(float(x))


def _rspo_terms(clist, config):
    """Per-candidate loss terms keyed by candidate index; candidates with
    an empty worse set carry no term."""
    gains = normalized_gains(clist.rewards)
    terms = {}
    for i in range(clist.n):
        worse = clist.worse_set(i)
        if not worse:
            continue
        gate = ref_gate(clist, i, config.delta)

        def g(j):
            lp = _as_scalar_tensor(clist.policy_logp[j])
            if gate:
                lp = ad.sub(lp, float(clist.ref_logp[j]))
            return ad.mul(lp, config.beta)

        g_i = g(i)
        inner = None
        for j in worse:
            m_ij = lambda_weight(i + 1, j + 1, gains)
            part = ad.mul(ad.exp(ad.sub(g(j), g_i)), m_ij)
            inner = part if inner is None else ad.add(inner, part)
        terms[i] = ad.mul(ad.log(ad.add(inner, 1.0)), 1.0 / _LOG2)
    return terms


def rspo_loss(clist, config):
    """Total preference loss over the list (an autodiff scalar).

    Single-candidate lists and candidates with empty worse sets
    contribute zero. When every pairwise weight is zero the inner sum is
    empty and the term vanishes as well.
    """
    terms = _rspo_terms(clist, config)
    if not terms:
        return Tensor(0.0)
    total = None
    for t in terms.values():
        total = t if total is None else ad.add(total, t)
    return total


def alignment_score(clist, i):
    """Normalized rank discrepancy of candidate i between the policy
    ordering and the reward ordering, in [0, 1]. Defined as 0 for
    single-candidate lists. Ties break by candidate index."""
    n = clist.n
    if n == 1:
        return 0.0
    r_v = i + 1  # the list is reward-descending, ties already index-stable
    policy = clist.policy_values()
    order = sorted(range(n), key=lambda j: (-policy[j], j))
    r_p = order.index(i) + 1
    return abs(r_p - r_v) / (n - 1)


def unified_weights(alignment, reward, config):
    """Per-candidate weights for the supervised and preference sides:
    ``w_vsl = w0 * (1 + v)^A`` grows with misalignment on valuable
    samples; ``w_rl = w0 * z_max * (1 - A)`` trusts the preference signal
    only where the model already broadly agrees with the rewards."""
    if reward < 0:
        raise ValueError("reward must be nonnegative")
    w_vsl = config.w0 * math.exp(alignment * math.log1p(reward))
    w_rl = config.w0 * config.z_max * (1.0 - alignment)
    return w_vsl, w_rl


@dataclass
class RlSample:
    """One logged candidate list for preference training.

    Candidates are reward-descending. ``ref_logp`` holds generation-time
    log-probs when the generating snapshot recorded them.
    """

    features: np.ndarray
    tokens_list: list
    rewards: np.ndarray
    value_tokens: list
    ref_logp: list = None
    source: str = "rl"


def unified_loss(batch, model, config, component_sink=None):
    """Joint objective over a mixed batch of supervised samples and
    candidate lists, averaged over the batch.

    Supervised samples contribute their value-weighted loss. For each
    list, every candidate is scored by the current model (differentiably);
    its alignment score then splits weight between imitation of that
    candidate and the list-wise preference term.

    ``component_sink``, when given, receives the batch-mean weighted
    contribution of each component under keys "sid", "ecpm", "mtp",
    "preference" (bookkeeping only, detached from the graph).
    """
    from adrec.losses.supervised import TrainingSample
    from adrec.model.decoder import context_process, lazy_forward

    if not batch:
        raise ValueError("empty batch")
    sink = ({"sid": 0.0, "ecpm": 0.0, "mtp": 0.0, "preference": 0.0}
            if component_sink is not None else None)
    total = None
    for sample in batch:
        if isinstance(sample, TrainingSample):
            x = context_process(sample.features, model.params)
            trace = lazy_forward(model, x, sample.tokens)
            item = vsl_loss(sample, trace, config)
            if sink is not None:
                _tally_supervised(sink, trace, sample.tokens,
                                  sample.value_token, sample.weight, config)
        else:
            item = _list_loss(sample, model, config, sink)
        total = item if total is None else ad.add(total, item)
    if sink is not None:
        component_sink.update({k: v / len(batch) for k, v in sink.items()})
    return ad.mul(total, 1.0 / len(batch))


def _tally_supervised(sink, trace, tokens, value_token, weight, config,
                      scale=1.0):
    from adrec.losses.supervised import ecpm_loss, sid_loss

    sink["sid"] += scale * weight * float(sid_loss(trace, tokens).data)
    if config.lambda_e != 0.0:
        sink["ecpm"] += (scale * weight * config.lambda_e
                         * float(ecpm_loss(trace, value_token).data))
    if config.lambda_mtp != 0.0:
        sink["mtp"] += (scale * weight * config.lambda_mtp
                        * float(mtp_loss(trace, tokens).data))


def _list_loss(sample, model, config, sink=None):
    from adrec.model.decoder import context_process, lazy_forward, sequence_log_prob

    x = context_process(sample.features, model.params)
    policy, per_cand = [], []
    for tokens, v_tok in zip(sample.tokens_list, sample.value_tokens):
        trace = lazy_forward(model, x, tokens)
        policy.append(sequence_log_prob(trace, tokens))
        loss = ntp_loss(trace, tokens, v_tok, config.lambda_e)
        if config.lambda_mtp != 0.0:
            loss = ad.add(loss, ad.mul(mtp_loss(trace, tokens), config.lambda_mtp))
        per_cand.append((loss, trace))
    clist = CandidateList(sample.tokens_list, sample.rewards, policy,
                          ref_logp=sample.ref_logp)
    terms = _rspo_terms(clist, config)
    item = None
    for i in range(clist.n):
        a = alignment_score(clist, i)
        w_vsl, w_rl = unified_weights(a, float(clist.rewards[i]), config)
        loss_i, trace_i = per_cand[i]
        part = ad.mul(loss_i, w_vsl)
        if sink is not None:
            _tally_supervised(sink, trace_i, sample.tokens_list[i],
                              sample.value_tokens[i], w_vsl, config,
                              scale=1.0 / clist.n)
        if i in terms and w_rl != 0.0:
            part = ad.add(part, ad.mul(terms[i], w_rl))
            if sink is not None:
                sink["preference"] += w_rl * float(terms[i].data) / clist.n
        item = part if item is None else ad.add(item, part)
    return ad.mul(item, 1.0 / clist.n)
