"""TTL result cache with an injectable clock.

Time is always passed in by the caller (virtual in tests and in the
simulation), so expiry behavior is deterministic. An entry is alive
strictly less than ``ttl`` after insertion. Expired entries are evicted
lazily on access.
"""

import threading


class TtlCache:
    def __init__(self, ttl):
        if ttl <= 0:
            raise ValueError("ttl must be positive")
        self.ttl = float(ttl)
        self._entries = {}
        self._lock = threading.RLock()
        self.hits = 0
        self.misses = 0

    def get(self, key, now):
        with self._lock:
            entry = self._entries.get(key)
            if entry is not None:
                value, inserted_at = entry
                if now - inserted_at < self.ttl:
                    self.hits += 1
                    return value
                del self._entries[key]
            self.misses += 1
            return None

    def put(self, key, value, now):
        with self._lock:
            self._entries[key] = (value, float(now))

    def purge(self, now):
        """Drop every expired entry; returns how many were dropped."""
        with self._lock:
            dead = [k for k, (_, ts) in self._entries.items()
                    if now - ts >= self.ttl]
            for k in dead:
                del self._entries[k]
            return len(dead)

    def __len__(self):
        return len(self._entries)
