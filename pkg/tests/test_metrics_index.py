"""ID metrics, the bidirectional index, and co-occurrence counting."""

import threading

import numpy as np
import pytest

from adrec.quantizer.cooccurrence import pair_weight, swing_like_cooccurrence
from adrec.quantizer.index import SidIndex
from adrec.quantizer.metrics import sid_metrics
from adrec.quantizer.residual import SemanticId
from adrec.verify import sid_metrics_oracle


def _sid(*tokens, sizes=(4, 4, 4)):
    return SemanticId(tuple(tokens), sizes)


class TestSidMetrics:
    def test_injective_assignment(self):
        assignments = {f"i{n}": _sid(n % 4, n // 4, 0) for n in range(10)}
        cpr, col, _ = sid_metrics(assignments, (4, 4, 4))
        assert cpr == 1.0
        assert col == 0.0

    def test_collisions_by_hand(self):
        assignments = {"i1": "A", "i2": "A", "i3": "B", "i4": "C"}
        cpr, col, _ = sid_metrics(assignments, (4, 4, 4))
        assert np.isclose(cpr, 4.0 / 3.0)
        assert np.isclose(col, 1.0 - 2.0 / 3.0)

    def test_utilization(self):
        assignments = {f"i{n}": _sid(n, 0, 0) for n in range(4)}
        _, _, util = sid_metrics(assignments, (4, 4, 4))
        assert np.isclose(util, 4.0 / 64.0)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            sid_metrics({}, (4,))

    def test_matches_bruteforce_oracle_on_random_maps(self):
        rng = np.random.default_rng(0)
        for _ in range(500):
            n = int(rng.integers(1, 50))
            sizes = tuple(int(rng.integers(2, 7))
                          for _ in range(int(rng.integers(1, 4))))
            assignments = {
                f"i{j}": tuple(int(rng.integers(0, s)) for s in sizes)
                for j in range(n)}
            got = sid_metrics(assignments, sizes)
            want = sid_metrics_oracle(assignments, sizes)
            np.testing.assert_allclose(got, want, atol=1e-12)


class TestSidIndex:
    def test_upsert_lookup(self):
        idx = SidIndex()
        s = _sid(0, 1, 2)
        idx.upsert("i1", s)
        assert idx.lookup(s) == {"i1"}
        assert idx.sid_of("i1") == s

    def test_move_semantics(self):
        idx = SidIndex()
        s1, s2 = _sid(0, 0, 0), _sid(1, 1, 1)
        idx.upsert("i1", s1)
        idx.upsert("i1", s2)
        assert idx.lookup(s1) == set()
        assert idx.lookup(s2) == {"i1"}

    def test_unseen_sid_is_empty_not_error(self):
        assert SidIndex().lookup(_sid(3, 3, 3)) == set()

    def test_roundtrip_consistency_sweep(self):
        rng = np.random.default_rng(7)
        idx = SidIndex()
        for n in range(100):
            idx.upsert(f"i{n}", _sid(*(int(rng.integers(0, 4))
                                       for _ in range(3))))
        # re-upsert a third of them elsewhere
        for n in range(0, 100, 3):
            idx.upsert(f"i{n}", _sid(*(int(rng.integers(0, 4))
                                       for _ in range(3))))
        assert len(idx) == 100
        for n in range(100):
            sid = idx.sid_of(f"i{n}")
            assert f"i{n}" in idx.lookup(sid)
        for sid in idx.all_sids():
            for item in idx.lookup(sid):
                assert idx.sid_of(item) == sid

    def test_concurrent_readers_during_writes(self):
        idx = SidIndex()
        for n in range(50):
            idx.upsert(f"i{n}", _sid(n % 4, (n // 4) % 4, 0))
        errors = []

        def reader():
            try:
                for _ in range(300):
                    for sid in idx.all_sids():
                        members = idx.lookup(sid)
                        assert all(isinstance(m, str) for m in members)
            except Exception as exc:  # pragma: no cover
                errors.append(exc)

        def writer():
            rng = np.random.default_rng(1)
            for _ in range(300):
                n = int(rng.integers(0, 50))
                idx.upsert(f"i{n}", _sid(*(int(rng.integers(0, 4))
                                           for _ in range(3))))

        threads = [threading.Thread(target=reader) for _ in range(3)]
        threads.append(threading.Thread(target=writer))
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors

    def test_version_bumps_on_change(self):
        idx = SidIndex()
        v0 = idx.version
        idx.upsert("i1", _sid(0, 0, 0))
        assert idx.version == v0 + 1
        idx.upsert("i1", _sid(0, 0, 0))  # no-op keeps version
        assert idx.version == v0 + 1


class TestCooccurrence:
    def test_single_shared_user(self):
        w = swing_like_cooccurrence([("u1", "a"), ("u1", "b")])
        assert pair_weight(w, "a", "b") == 1
        assert pair_weight(w, "b", "a") == 1

    def test_disjoint_users(self):
        w = swing_like_cooccurrence([("u1", "a"), ("u2", "b")])
        assert pair_weight(w, "a", "b") == 0

    def test_three_shared_users(self):
        log = [(f"u{i}", item) for i in range(3) for item in ("a", "b")]
        w = swing_like_cooccurrence(log)
        assert pair_weight(w, "a", "b") == 3

    def test_duplicate_views_count_once(self):
        w = swing_like_cooccurrence([("u1", "a"), ("u1", "a"), ("u1", "b")])
        assert pair_weight(w, "a", "b") == 1
        with pytest.raises(ValueError):
            pair_weight(w, "a", "a")
