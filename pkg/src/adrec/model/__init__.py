"""Decoder network: linear context processor, pre-LN decoder layers,
early/late token injection forwards, per-level classifiers, value head."""

from adrec.model.decoder import (
    DecoderConfig,
    DecoderModel,
    ForwardTrace,
    context_process,
    ecpm_head,
    lazy_forward,
    load_checkpoint,
    save_checkpoint,
    sequence_log_prob,
    vanilla_forward,
)
from adrec.model.layers import LayerCallCounter, decoder_layer, fuse

__all__ = [
    "DecoderConfig",
    "DecoderModel",
    "ForwardTrace",
    "LayerCallCounter",
    "context_process",
    "ecpm_head",
    "decoder_layer",
    "fuse",
    "lazy_forward",
    "load_checkpoint",
    "save_checkpoint",
    "sequence_log_prob",
    "vanilla_forward",
]
