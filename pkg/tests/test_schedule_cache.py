"""Width schedules, traffic scaling, and the TTL cache."""

import threading

import numpy as np
import pytest

from adrec.serving.cache import TtlCache
from adrec.serving.schedule import (BeamSchedule, TrafficSignal, resolve_dbw,
                                    scale_schedule, tabs_adjust)


class TestResolveDbw:
    def test_production_style_progressive_list(self):
        sched = resolve_dbw([128, 256, 512], 3)
        assert sched.widths == (128, 256, 512)
        assert sched.base_width == 512

    def test_desk_scale_default(self):
        sched = resolve_dbw([4, 8, 16], 3)
        assert sched.widths == (4, 8, 16)

    def test_constant_expands(self):
        assert resolve_dbw(512, 3).widths == (512, 512, 512)

    def test_validation(self):
        with pytest.raises(ValueError):
            resolve_dbw([4, 8], 3)
        with pytest.raises(ValueError):
            resolve_dbw(0, 3)
        with pytest.raises(ValueError):
            resolve_dbw([4, 0, 8], 3)


class TestTabs:
    def test_peak_keeps_base_width(self):
        signal = TrafficSignal(qps=150.0, q_threshold=100.0, capacity_slack=1.0)
        assert tabs_adjust(signal, 512) == 512

    def test_offpeak_boost_sixty_percent(self):
        signal = TrafficSignal(qps=10.0, q_threshold=100.0, capacity_slack=1.0)
        assert tabs_adjust(signal, 512) == 819  # floor(512*1.6 + 0.5)

    def test_zero_slack_means_no_headroom(self):
        signal = TrafficSignal(qps=10.0, q_threshold=100.0, capacity_slack=0.0)
        assert tabs_adjust(signal, 512) == 512

    def test_threshold_boundary_counts_as_peak(self):
        signal = TrafficSignal(qps=100.0, q_threshold=100.0, capacity_slack=1.0)
        assert tabs_adjust(signal, 512) == 512

    def test_scale_schedule_rounds_half_up(self):
        sched = BeamSchedule((4, 8, 16), base_width=16)
        active = tabs_adjust(
            TrafficSignal(qps=1.0, q_threshold=10.0, capacity_slack=1.0), 16)
        assert active == 26  # floor(16*1.6 + 0.5)
        scaled = scale_schedule(sched, active)
        # realized factor 26/16 = 1.625: (6.5, 13.0, 26.0) -> (7, 13, 26)
        assert scaled.widths == (7, 13, 26)

    def test_signal_validation(self):
        with pytest.raises(ValueError):
            TrafficSignal(qps=-1.0, q_threshold=10.0, capacity_slack=0.5)
        with pytest.raises(ValueError):
            TrafficSignal(qps=1.0, q_threshold=0.0, capacity_slack=0.5)
        with pytest.raises(ValueError):
            TrafficSignal(qps=1.0, q_threshold=5.0, capacity_slack=1.5)


class TestTtlCache:
    def test_hit_within_ttl(self):
        cache = TtlCache(60.0)
        cache.put("k", "v", now=0.0)
        assert cache.get("k", now=30.0) == "v"

    def test_miss_after_ttl(self):
        cache = TtlCache(60.0)
        cache.put("k", "v", now=0.0)
        assert cache.get("k", now=61.0) is None
        assert cache.get("k", now=60.0) is None  # boundary is strict

    def test_never_returns_stale_under_scan(self):
        cache = TtlCache(5.0)
        rng = np.random.default_rng(0)
        now = 0.0
        inserted = {}
        for _ in range(2000):
            now += float(rng.exponential(1.5))
            key = int(rng.integers(0, 10))
            if rng.random() < 0.5:
                cache.put(key, now, now=now)
                inserted[key] = now
            else:
                value = cache.get(key, now=now)
                if value is not None:
                    assert now - value < 5.0

    def test_replay_hit_rate_matches_counting_oracle(self):
        rng = np.random.default_rng(1)
        gaps = rng.exponential(scale=40.0, size=500)
        ttl = 60.0
        cache = TtlCache(ttl)
        now = 0.0
        cache.put("u", "r", now)
        hits = 0
        for gap in gaps:
            now += gap
            if cache.get("u", now) is not None:
                hits += 1
            else:
                cache.put("u", "r", now)
        expected, since = 0, 0.0
        for gap in gaps:
            since += gap
            if since < ttl:
                expected += 1
            else:
                since = 0.0
        assert hits == expected
        assert cache.hits == hits

    def test_purge_and_len(self):
        cache = TtlCache(10.0)
        cache.put("a", 1, now=0.0)
        cache.put("b", 2, now=5.0)
        assert len(cache) == 2
        assert cache.purge(now=12.0) == 1
        assert len(cache) == 1

    def test_concurrent_access(self):
        cache = TtlCache(50.0)
        errors = []

        def worker(offset):
            try:
                for i in range(500):
                    cache.put((offset, i % 7), i, now=float(i))
                    cache.get((offset, (i + 3) % 7), now=float(i))
            except Exception as exc:  # pragma: no cover
                errors.append(exc)

        threads = [threading.Thread(target=worker, args=(n,)) for n in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors

    def test_invalid_ttl(self):
        with pytest.raises(ValueError):
            TtlCache(0.0)
