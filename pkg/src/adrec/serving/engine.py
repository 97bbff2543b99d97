"""Request-level serving: snapshot store, cache, traffic adaptation,
beam generation, and ID-to-item resolution."""

import threading
from dataclasses import dataclass, field

import numpy as np

from adrec.autodiff import no_grad
from adrec.model.decoder import context_process
from adrec.model.layers import LayerCallCounter
from adrec.serving.beam import beam_search
from adrec.serving.cache import TtlCache
from adrec.serving.schedule import TrafficSignal, scale_schedule, tabs_adjust


class SnapshotStore:
    """Copy-on-publish model snapshots; readers always see one version."""

    def __init__(self, model=None):
        self._lock = threading.Lock()
        self._version = 0
        self._model = None
        if model is not None:
            self.publish(model)

    def publish(self, model):
        snapshot = model.clone()
        with self._lock:
            self._version += 1
            self._model = snapshot
            return self._version

    def current(self):
        with self._lock:
            return self._version, self._model


@dataclass
class ServingConfig:
    schedule: object  # BeamSchedule
    q_threshold: float = 100.0
    boost: float = 0.6
    ttl: float = 60.0
    shared_kv: bool = True
    precut: bool = True
    value_rerank: bool = False


@dataclass
class ServeResult:
    items: list  # (item_id, score) pairs, ranked
    sids: list  # (SemanticId, score) pairs as generated
    from_cache: bool
    snapshot_version: int
    widths: tuple
    latency_virtual: int = 0  # decoder-layer calls spent on this request

    def record(self, user_id, now):
        """Loggable request record (newline-delimited JSON friendly)."""
        return {
            "user_id": user_id,
            "ts": float(now),
            "items": [[i, float(s)] for i, s in self.items],
            "from_cache": self.from_cache,
            "snapshot_version": self.snapshot_version,
            "widths": list(self.widths),
            "latency_virtual": self.latency_virtual,
        }


class ServingEngine:
    def __init__(self, store, index, config, buckets=None, counter=None):
        self.store = store
        self.index = index
        self.config = config
        self.buckets = buckets
        self.counter = counter if counter is not None else LayerCallCounter()
        self.cache = TtlCache(config.ttl)
        self._lock = threading.Lock()
        self.model_invocations = 0
        self.requests = 0

    def serve_request(self, user_id, features, now, qps, capacity_slack=1.0):
        """Serve one request: cache first; on a miss run traffic-scaled
        beam generation and resolve IDs to items.

        Generated IDs with no indexed item are skipped, so the returned
        list may be shorter than the final beam width but never longer.
        """
        with self._lock:
            self.requests += 1
        key = (user_id, self.index.version)
        cached = self.cache.get(key, now)
        if cached is not None:
            return ServeResult(cached[0], cached[1], True, cached[2],
                               cached[3], latency_virtual=0)

        version, model = self.store.current()
        signal = TrafficSignal(qps, self.config.q_threshold, capacity_slack)
        active = tabs_adjust(signal, self.config.schedule.base_width,
                             self.config.boost)
        sched = scale_schedule(self.config.schedule, active)
        with no_grad():
            x = context_process(np.atleast_2d(features), model.params)
        calls_before = self.counter.layer_calls
        sids = beam_search(model, x, sched, shared_kv=self.config.shared_kv,
                           precut=self.config.precut, counter=self.counter,
                           value_rerank=self.config.value_rerank,
                           buckets=self.buckets)
        latency = self.counter.layer_calls - calls_before
        with self._lock:
            self.model_invocations += 1
        items = []
        for sid, score in sids:
            ids = self.index.lookup(sid)
            if ids:
                items.append((min(ids), float(score)))
        self.cache.put(key, (items, sids, version, sched.widths), now)
        return ServeResult(items, sids, False, version, sched.widths,
                           latency_virtual=latency)

    def hit_rate(self):
        total = self.cache.hits + self.cache.misses
        return self.cache.hits / total if total else 0.0
