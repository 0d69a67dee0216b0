"""Spent-coin storage: a versioned key-value interface with atomic
compare-and-set, plus range sharding over the key hash space.

Any backing database can implement KVStore; bundled here are an in-memory
store and a single-node file store. ShardedStore routes every key to exactly
one shard by the SHA-256 of the key, so per-coin operations never touch two
shards; with ``instrument=True`` it records which shards each labelled
operation touched so tests can assert shard isolation.
"""

from __future__ import annotations

import base64
import bisect
import json
import os
import threading
from dataclasses import dataclass

from .crypto import sha256
from .errors import ConfigError

_HASH_SPACE = 1 << 256


class KVStore:
    """Versioned KV with compare-and-set. Versions start at 1; expected
    version 0 means "create, must not exist"."""

    def get(self, key: bytes):
        """Return (value, version) or None."""
        raise NotImplementedError

    def cas(self, key: bytes, expected_version: int, value: bytes) -> bool:
        raise NotImplementedError

    def delete(self, key: bytes) -> bool:
        raise NotImplementedError

    def scan(self):
        """Iterate (key, value, version) over a point-in-time snapshot."""
        raise NotImplementedError

    def size_info(self) -> tuple[int, int]:
        """(record count, stored payload bytes)."""
        count, nbytes = 0, 0
        for key, value, _ in self.scan():
            count += 1
            nbytes += len(key) + len(value)
        return count, nbytes


class MemoryKV(KVStore):
    def __init__(self):
        self._lock = threading.Lock()
        self._data: dict[bytes, tuple[bytes, int]] = {}

    def get(self, key):
        with self._lock:
            hit = self._data.get(key)
            return hit if hit is not None else None

    def cas(self, key, expected_version, value):
        with self._lock:
            current = self._data.get(key)
            have = current[1] if current else 0
            if have != expected_version:
                return False
            self._data[key] = (value, have + 1)
            return True

    def delete(self, key):
        with self._lock:
            return self._data.pop(key, None) is not None

    def scan(self):
        with self._lock:
            snapshot = list(self._data.items())
        for key, (value, version) in snapshot:
            yield key, value, version


class FileKV(KVStore):
    """Single JSON file, atomically rewritten on every mutation. Fine for a
    desk-scale node; swap in a real database behind KVStore beyond that."""

    def __init__(self, path):
        self._path = str(path)
        self._lock = threading.Lock()
        self._data: dict[bytes, tuple[bytes, int]] = {}
        if os.path.exists(self._path):
            with open(self._path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
            for k, entry in raw.items():
                self._data[bytes.fromhex(k)] = (
                    base64.b64decode(entry["data"]), entry["version"])

    def _flush(self):
        raw = {
            k.hex(): {"data": base64.b64encode(v).decode(), "version": ver}
            for k, (v, ver) in self._data.items()
        }
        tmp = self._path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(raw, fh, sort_keys=True)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, self._path)

    def get(self, key):
        with self._lock:
            hit = self._data.get(key)
            return hit if hit is not None else None

    def cas(self, key, expected_version, value):
        with self._lock:
            current = self._data.get(key)
            have = current[1] if current else 0
            if have != expected_version:
                return False
            self._data[key] = (value, have + 1)
            self._flush()
            return True

    def delete(self, key):
        with self._lock:
            if key not in self._data:
                return False
            del self._data[key]
            self._flush()
            return True

    def scan(self):
        with self._lock:
            snapshot = list(self._data.items())
        for key, (value, version) in snapshot:
            yield key, value, version


@dataclass(frozen=True)
class ShardMap:
    """Ordered exclusive upper bounds partitioning [0, 2^256) into ranges;
    bounds[i] closes shard i's range, the last bound is 2^256."""

    bounds: tuple

    def __post_init__(self):
        if not self.bounds:
            raise ConfigError("shard map needs at least one range")
        if list(self.bounds) != sorted(set(self.bounds)):
            raise ConfigError("shard bounds must be strictly increasing")
        if self.bounds[-1] != _HASH_SPACE:
            raise ConfigError("last shard bound must close the hash space")

    @property
    def shard_count(self) -> int:
        return len(self.bounds)

    @classmethod
    def even(cls, shard_count: int) -> "ShardMap":
        if shard_count < 1:
            raise ConfigError("shard_count must be >= 1")
        step = _HASH_SPACE // shard_count
        bounds = tuple(step * i for i in range(1, shard_count)) + (_HASH_SPACE,)
        return cls(bounds=bounds)

    def route_hash(self, h: int) -> int:
        return bisect.bisect_right(self.bounds, h)

    def route(self, key: bytes) -> int:
        return self.route_hash(int.from_bytes(sha256(key), "big"))


class ShardedStore:
    """Routes each key to one backing KVStore by key-hash range."""

    def __init__(self, shards: list[KVStore], shard_map: ShardMap, instrument: bool = False):
        if len(shards) != shard_map.shard_count:
            raise ConfigError("shard list does not match the shard map")
        self.shards = shards
        self.shard_map = shard_map
        self.instrument = instrument
        self._local = threading.local()
        self._trace_lock = threading.Lock()
        self.op_trace: list[tuple[str, frozenset]] = []

    # -- shard-isolation instrumentation ------------------------------------

    def begin_op(self, label: str):
        if self.instrument:
            self._local.op = (label, set())

    def end_op(self):
        if self.instrument and getattr(self._local, "op", None) is not None:
            label, shards = self._local.op
            with self._trace_lock:
                self.op_trace.append((label, frozenset(shards)))
            self._local.op = None

    def _touch(self, shard_id: int):
        if self.instrument and getattr(self._local, "op", None) is not None:
            self._local.op[1].add(shard_id)

    # -- KV surface ----------------------------------------------------------

    def route(self, key: bytes) -> int:
        return self.shard_map.route(key)

    def get(self, key: bytes):
        sid = self.route(key)
        self._touch(sid)
        return self.shards[sid].get(key)

    def cas(self, key: bytes, expected_version: int, value: bytes) -> bool:
        sid = self.route(key)
        self._touch(sid)
        return self.shards[sid].cas(key, expected_version, value)

    def delete(self, key: bytes) -> bool:
        sid = self.route(key)
        self._touch(sid)
        return self.shards[sid].delete(key)

    def scan(self):
        for shard in self.shards:
            yield from shard.scan()

    def size_info(self) -> tuple[int, int]:
        count, nbytes = 0, 0
        for shard in self.shards:
            c, b = shard.size_info()
            count += c
            nbytes += b
        return count, nbytes


def memory_sharded(shard_count: int, instrument: bool = False) -> ShardedStore:
    return ShardedStore([MemoryKV() for _ in range(shard_count)],
                        ShardMap.even(shard_count), instrument=instrument)


def file_sharded(directory, shard_count: int, instrument: bool = False) -> ShardedStore:
    os.makedirs(directory, exist_ok=True)
    shards = [FileKV(os.path.join(directory, f"shard-{i:03d}.json"))
              for i in range(shard_count)]
    return ShardedStore(shards, ShardMap.even(shard_count), instrument=instrument)
