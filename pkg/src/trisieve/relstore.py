"""Two-way keyed store for a finite relation between element ids and codeword ids.

Buckets keep insertion order and are index-addressable. ``sample_bucket``
draws a uniform member, standing in for a superposition lookup; an empty
bucket yields ``None``.
"""

from __future__ import annotations

import json
from collections import defaultdict

import numpy as np

SNAPSHOT_VERSION = 1
FORWARD = "x"
BACKWARD = "c"


class DuplicatePairError(KeyError):
    pass


class FrozenStoreError(RuntimeError):
    pass


class RelationStore:
    def __init__(self):
        self._forward: dict[int, list[int]] = defaultdict(list)
        self._backward: dict[int, list[int]] = defaultdict(list)
        self._pairs: set[tuple[int, int]] = set()
        self.frozen = False
        self._csr = None

    def __len__(self):
        return len(self._pairs)

    def __contains__(self, pair):
        return (int(pair[0]), int(pair[1])) in self._pairs

    def insert(self, x_id: int, c_id: int) -> None:
        if self.frozen:
            raise FrozenStoreError("store is frozen")
        pair = (int(x_id), int(c_id))
        if pair in self._pairs:
            raise DuplicatePairError(pair)
        self._pairs.add(pair)
        self._forward[pair[0]].append(pair[1])
        self._backward[pair[1]].append(pair[0])

    def insert_many(self, x_id: int, c_ids) -> None:
        for c in c_ids:
            self.insert(x_id, c)

    def freeze(self) -> "RelationStore":
        self.frozen = True
        return self

    def lookup_by_x(self, x_id: int) -> list[int]:
        return list(self._forward.get(int(x_id), ()))

    def lookup_by_c(self, c_id: int) -> list[int]:
        return list(self._backward.get(int(c_id), ()))

    def size_by_x(self, x_id: int) -> int:
        return len(self._forward.get(int(x_id), ()))

    def size_by_c(self, c_id: int) -> int:
        return len(self._backward.get(int(c_id), ()))

    def keys(self, direction: str = FORWARD) -> list[int]:
        side = self._forward if direction == FORWARD else self._backward
        return sorted(k for k, v in side.items() if v)

    def sample_bucket(self, key: int, direction: str, rng):
        bucket = self._bucket(key, direction)
        if not bucket:
            return None
        return bucket[int(rng.integers(len(bucket)))]

    def _bucket(self, key, direction):
        if direction == FORWARD:
            return self._forward.get(int(key), ())
        if direction == BACKWARD:
            return self._backward.get(int(key), ())
        raise ValueError(f"direction must be {FORWARD!r} or {BACKWARD!r}")

    # --- vectorized views (frozen stores only)

    def csr(self, direction: str, n_keys: int | None = None):
        """Buckets as CSR arrays over dense keys 0..n_keys-1: (ptr, members).

        For codeword keys pass ``n_keys=None``; the keys are then compacted
        and a third array with the sorted original keys is returned.
        """
        if not self.frozen:
            raise FrozenStoreError("freeze the store before taking array views")
        side = self._forward if direction == FORWARD else self._backward
        if n_keys is None:
            keys = np.array(sorted(k for k, v in side.items() if v), dtype=np.int64)
        else:
            keys = np.arange(n_keys, dtype=np.int64)
        ptr = np.zeros(keys.size + 1, dtype=np.int64)
        members = []
        for i, k in enumerate(keys):
            b = side.get(int(k), ())
            members.extend(b)
            ptr[i + 1] = ptr[i] + len(b)
        return ptr, np.asarray(members, dtype=np.int64), keys

    # --- snapshots

    def to_json(self) -> str:
        pairs = [[x, c] for x, cs in sorted(self._forward.items()) for c in cs]
        order = [[c, x] for c, xs in sorted(self._backward.items()) for x in xs]
        return json.dumps(
            {"format": "relstore", "version": SNAPSHOT_VERSION, "frozen": self.frozen, "forward": pairs, "backward": order}
        )

    @classmethod
    def from_json(cls, text: str) -> "RelationStore":
        obj = json.loads(text)
        if obj.get("format") != "relstore" or obj.get("version") != SNAPSHOT_VERSION:
            raise ValueError("not a supported relation-store snapshot")
        store = cls()
        for x, c in obj["forward"]:
            store._forward[int(x)].append(int(c))
            store._pairs.add((int(x), int(c)))
        for c, x in obj["backward"]:
            store._backward[int(c)].append(int(x))
        if sum(len(v) for v in store._backward.values()) != len(store._pairs):
            raise ValueError("snapshot directions disagree")
        store.frozen = bool(obj["frozen"])
        return store


def lookup_by_x(store: RelationStore, x_id: int) -> list[int]:
    return store.lookup_by_x(x_id)


def lookup_by_c(store: RelationStore, c_id: int) -> list[int]:
    return store.lookup_by_c(c_id)


def sample_bucket(store: RelationStore, key: int, direction: str, rng):
    return store.sample_bucket(key, direction, rng)
