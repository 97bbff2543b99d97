"""Request engine: caching, traffic scaling, ID resolution, snapshots."""

import numpy as np

from adrec.model.decoder import DecoderConfig, DecoderModel
from adrec.quantizer.index import SidIndex
from adrec.quantizer.residual import SemanticId
from adrec.serving.engine import ServingConfig, ServingEngine, SnapshotStore
from adrec.serving.schedule import BeamSchedule


def _setup(ttl=60.0, index_sids=True, value_rerank=False):
    cfg = DecoderConfig(feat_dim=4, d=4, d_ff=6, n_layers=2, trunk_depth=1,
                        level_vocab_sizes=(3, 3), n_value_buckets=2, seed=5)
    model = DecoderModel(cfg)
    store = SnapshotStore(model)
    index = SidIndex()
    if index_sids:
        n = 0
        for a in range(3):
            for b in range(3):
                index.upsert(f"item{n}", SemanticId((a, b), (3, 3)))
                n += 1
    engine = ServingEngine(store, index, ServingConfig(
        schedule=BeamSchedule((2, 4), base_width=4), q_threshold=10.0,
        ttl=ttl, value_rerank=value_rerank))
    return engine, store, index


def _features():
    return np.ones((1, 4))


def test_cold_request_invokes_model_once():
    engine, _, _ = _setup()
    result = engine.serve_request("u1", _features(), now=0.0, qps=20.0)
    assert not result.from_cache
    assert engine.model_invocations == 1
    assert 1 <= len(result.items) <= 4


def test_cached_request_skips_model():
    engine, _, _ = _setup()
    engine.serve_request("u1", _features(), now=0.0, qps=20.0)
    result = engine.serve_request("u1", _features(), now=30.0, qps=20.0)
    assert result.from_cache
    assert engine.model_invocations == 1
    expired = engine.serve_request("u1", _features(), now=61.0, qps=20.0)
    assert not expired.from_cache
    assert engine.model_invocations == 2


def test_distinct_users_not_shared():
    engine, _, _ = _setup()
    engine.serve_request("u1", _features(), now=0.0, qps=20.0)
    result = engine.serve_request("u2", _features(), now=1.0, qps=20.0)
    assert not result.from_cache


def test_index_update_invalidates_cache_key():
    engine, _, index = _setup()
    engine.serve_request("u1", _features(), now=0.0, qps=20.0)
    index.upsert("fresh", SemanticId((0, 0), (3, 3)))
    result = engine.serve_request("u1", _features(), now=1.0, qps=20.0)
    assert not result.from_cache  # pool version changed


def test_unindexed_sids_skipped_without_error():
    engine, _, index = _setup(index_sids=False)
    index.upsert("only", SemanticId((0, 0), (3, 3)))
    result = engine.serve_request("u1", _features(), now=0.0, qps=20.0)
    assert len(result.items) <= 1
    assert all(item == "only" for item, _ in result.items)


def test_offpeak_widens_schedule():
    engine, _, _ = _setup()
    peak = engine.serve_request("u1", _features(), now=0.0, qps=20.0)
    off = engine.serve_request("u2", _features(), now=0.0, qps=1.0)
    assert peak.widths == (2, 4)
    assert off.widths == (3, 6)  # 60% boost, rounded half-up


def test_returned_length_bounded_by_final_width():
    engine, _, _ = _setup()
    result = engine.serve_request("u1", _features(), now=0.0, qps=20.0)
    assert len(result.items) <= 4
    scores = [s for _, s in result.items]
    assert scores == sorted(scores, reverse=True)


def test_record_is_json_friendly():
    import json

    engine, _, _ = _setup()
    result = engine.serve_request("u1", _features(), now=2.0, qps=20.0)
    record = result.record("u1", 2.0)
    parsed = json.loads(json.dumps(record))
    assert parsed["user_id"] == "u1"
    assert parsed["snapshot_version"] == 1
    assert not parsed["from_cache"]


def test_concurrent_requests_consistent_counters():
    import threading

    engine, _, _ = _setup(ttl=0.001)  # effectively disable caching
    errors = []

    def worker(uid):
        try:
            for i in range(10):
                res = engine.serve_request(f"u{uid}", _features(),
                                           now=float(i), qps=20.0)
                assert res.items
        except Exception as exc:  # pragma: no cover
            errors.append(exc)

    threads = [threading.Thread(target=worker, args=(n,)) for n in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
    assert engine.requests == 40
    assert engine.model_invocations == 40


def test_snapshot_store_versions_and_isolation():
    cfg = DecoderConfig(feat_dim=4, d=4, d_ff=6, n_layers=2, trunk_depth=0,
                        level_vocab_sizes=(3,), n_value_buckets=2, seed=1)
    model = DecoderModel(cfg)
    store = SnapshotStore(model)
    v1, snap1 = store.current()
    model.params["bos"].data += 100.0
    _, snap1_again = store.current()
    np.testing.assert_array_equal(snap1.params["bos"].data,
                                  snap1_again.params["bos"].data)
    v2 = store.publish(model)
    assert v2 == v1 + 1
    _, snap2 = store.current()
    assert not np.array_equal(snap1.params["bos"].data,
                              snap2.params["bos"].data)
