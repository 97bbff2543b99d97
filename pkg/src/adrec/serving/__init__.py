"""Beam-search serving: per-level width schedules, traffic-adaptive
scaling, TTL result cache, and the request engine."""

from adrec.serving.beam import (beam_search, shared_encoder_kv,
                                topk_global, topk_precut)
from adrec.serving.cache import TtlCache
from adrec.serving.engine import ServingEngine, SnapshotStore
from adrec.serving.schedule import (
    BeamSchedule,
    TrafficSignal,
    resolve_dbw,
    scale_schedule,
    tabs_adjust,
)

__all__ = [
    "BeamSchedule",
    "ServingEngine",
    "SnapshotStore",
    "TrafficSignal",
    "TtlCache",
    "beam_search",
    "shared_encoder_kv",
    "resolve_dbw",
    "scale_schedule",
    "tabs_adjust",
    "topk_global",
    "topk_precut",
]
