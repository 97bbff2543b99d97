"""Bidirectional semantic-ID <-> item index.

Reads are lock-free against an internally consistent dict; writes are
serialized by a lock. Re-upserting an item under a new ID moves it: the
old ID's entry is cleaned up so the two directions never disagree.
"""

import threading


class SidIndex:
    def __init__(self):
        self._forward = {}
        self._backward = {}
        self._write_lock = threading.Lock()
        self.version = 0

    def upsert(self, item_id, sid):
        with self._write_lock:
            old = self._backward.get(item_id)
            if old == sid:
                return
            if old is not None:
                remaining = self._forward[old] - {item_id}
                if remaining:
                    self._forward[old] = remaining
                else:
                    del self._forward[old]
            self._forward[sid] = self._forward.get(sid, frozenset()) | {item_id}
            self._backward[item_id] = sid
            self.version += 1

    def lookup(self, sid):
        """Item ids currently filed under ``sid``; empty set if unseen."""
        return set(self._forward.get(sid, ()))

    def sid_of(self, item_id):
        return self._backward.get(item_id)

    def all_sids(self):
        return list(self._forward.keys())

    def __len__(self):
        return len(self._backward)
