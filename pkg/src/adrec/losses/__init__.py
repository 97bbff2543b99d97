"""Training objectives: value-weighted supervised losses, ranking
utilities, list-wise preference optimization, and contrastive InfoNCE."""

from adrec.losses.nce import info_nce
from adrec.losses.preference import (
    CandidateList,
    LossConfig,
    alignment_score,
    ref_gate,
    rspo_loss,
    unified_loss,
    unified_weights,
)
from adrec.losses.ranking import ideal_dcg, lambda_weight, ndcg, ndcg_cost
from adrec.losses.supervised import (
    EcpmBuckets,
    TrainingSample,
    discretize_ecpm,
    ecpm_loss,
    fit_ecpm_buckets,
    mtp_loss,
    ntp_loss,
    sid_loss,
    vsl_loss,
)

__all__ = [
    "CandidateList",
    "EcpmBuckets",
    "LossConfig",
    "TrainingSample",
    "alignment_score",
    "discretize_ecpm",
    "ecpm_loss",
    "fit_ecpm_buckets",
    "ideal_dcg",
    "info_nce",
    "lambda_weight",
    "mtp_loss",
    "ndcg",
    "ndcg_cost",
    "ntp_loss",
    "ref_gate",
    "rspo_loss",
    "sid_loss",
    "unified_loss",
    "unified_weights",
    "vsl_loss",
]
