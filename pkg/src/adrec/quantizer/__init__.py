"""Semantic-ID tokenization: balanced clustering codebooks, hashed
non-semantic level, item index, and codebook quality metrics."""

from adrec.quantizer.balanced_kmeans import balanced_kmeans
from adrec.quantizer.cooccurrence import swing_like_cooccurrence
from adrec.quantizer.hashing import hash_final_level
from adrec.quantizer.index import SidIndex
from adrec.quantizer.metrics import sid_metrics
from adrec.quantizer.residual import (
    Item,
    QuantizerModel,
    SemanticId,
    encode_item,
    fit_quantizer,
    load_quantizer,
    save_quantizer,
)

__all__ = [
    "Item",
    "QuantizerModel",
    "SemanticId",
    "SidIndex",
    "balanced_kmeans",
    "encode_item",
    "fit_quantizer",
    "hash_final_level",
    "load_quantizer",
    "save_quantizer",
    "sid_metrics",
    "swing_like_cooccurrence",
]
