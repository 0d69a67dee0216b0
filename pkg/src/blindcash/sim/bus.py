"""Deterministic in-process message bus.

A single-threaded discrete-event loop over a virtual millisecond clock.
Messages are delivered in (time, sequence) order; loss, duplication, and
latency are sampled from one seeded RNG at send time, so identical seeds
replay identical transcripts. Request/response RPC retries on (virtual)
timeout, which is what exercises every endpoint's idempotency.

Each named actor's handler runs one delivery at a time: deliveries arriving
while the actor is busy are deferred until it finishes, like a
single-threaded server draining its accept queue. True thread-level
concurrency is exercised against the mint directly in the test suite, not
through the bus.
"""

from __future__ import annotations

import heapq
import itertools
import random

from ..crypto import sha256
from ..errors import Unreachable


class VirtualClock:
    """Milliseconds since scenario start, mapped onto epoch seconds."""

    def __init__(self, epoch_start: int = 1_700_000_000):
        self.now_ms = 0
        self.epoch_start = epoch_start

    def now(self) -> int:
        return self.epoch_start + self.now_ms // 1000

    def advance_ms(self, ms: int):
        self.now_ms += int(ms)

    def advance_seconds(self, seconds: int):
        self.now_ms += int(seconds) * 1000


class Bus:
    def __init__(self, seed: int, clock: VirtualClock, loss: float = 0.0,
                 duplication: float = 0.0, latency_ms: tuple[int, int] = (5, 15),
                 log=None, timeout_ms: int = 5_000, retries: int = 8):
        self.rng = random.Random(seed)
        self.clock = clock
        self.loss = loss
        self.duplication = duplication
        self.latency_ms = latency_ms
        self.log = log
        self.timeout_ms = timeout_ms
        self.retries = retries
        self._handlers = {}
        self._queue = []            # (deliver_ms, seq, entry dict)
        self._seq = itertools.count()
        self._req_ids = itertools.count(1)
        self._responses = {}        # req_id -> payload bytes
        self._busy = set()
        self._deferred = {}         # actor -> list of entries

    def register(self, name: str, handler):
        """handler(origin: str, credential: str, env_bytes) -> env_bytes."""
        self._handlers[name] = handler

    def _emit(self, event: str, **data):
        if self.log is not None:
            self.log.emit(event, **data)

    def _sample_latency(self) -> int:
        lo, hi = self.latency_ms
        return self.rng.randint(lo, hi) if hi > lo else lo

    def _send(self, kind: str, src: str, dst: str, payload: bytes,
              req_id: int, origin: str, credential: str):
        """Sample faults and enqueue deliveries for one logical message."""
        copies = 1
        if self.loss and self.rng.random() < self.loss:
            copies = 0
        elif self.duplication and self.rng.random() < self.duplication:
            copies = 2
        digest = sha256(payload)[:4].hex()
        if copies == 0:
            self._emit("bus.drop", kind=kind, src=src, dst=dst, req=req_id,
                       size=len(payload), msg=digest)
            return
        for copy in range(copies):
            latency = self._sample_latency()
            entry = {
                "kind": kind, "src": src, "dst": dst, "payload": payload,
                "req_id": req_id, "origin": origin, "credential": credential,
            }
            heapq.heappush(self._queue,
                           (self.clock.now_ms + latency, next(self._seq), entry))
            self._emit("bus.send", kind=kind, src=src, dst=dst, req=req_id,
                       size=len(payload), msg=digest, copy=copy,
                       latency=latency)

    def _deliver(self, entry: dict):
        kind = entry["kind"]
        self._emit("bus.deliver", kind=kind, src=entry["src"], dst=entry["dst"],
                   req=entry["req_id"], msg=sha256(entry["payload"])[:4].hex())
        if kind == "resp":
            # first response for a request wins; later copies are stale
            self._responses.setdefault(entry["req_id"], entry["payload"])
            return
        dst = entry["dst"]
        if dst in self._busy:
            self._deferred.setdefault(dst, []).append(entry)
            return
        handler = self._handlers.get(dst)
        if handler is None:
            self._emit("bus.dead_letter", dst=dst, req=entry["req_id"])
            return
        self._busy.add(dst)
        try:
            reply = handler(entry["origin"], entry["credential"], entry["payload"])
        finally:
            self._busy.discard(dst)
            for waiting in self._deferred.pop(dst, []):
                heapq.heappush(self._queue,
                               (self.clock.now_ms, next(self._seq), waiting))
        if reply is not None:
            self._send("resp", dst, entry["src"], reply, entry["req_id"],
                       origin=dst, credential="")

    def _pump_until(self, deadline_ms: int, req_id: int) -> bytes | None:
        while True:
            if req_id in self._responses:
                return self._responses[req_id]
            if not self._queue or self._queue[0][0] > deadline_ms:
                self.clock.now_ms = max(self.clock.now_ms, deadline_ms)
                return self._responses.get(req_id)
            deliver_ms, _, entry = heapq.heappop(self._queue)
            self.clock.now_ms = max(self.clock.now_ms, deliver_ms)
            self._deliver(entry)

    def drain(self):
        """Deliver everything still in flight (end-of-scenario settling)."""
        while self._queue:
            deliver_ms, _, entry = heapq.heappop(self._queue)
            self.clock.now_ms = max(self.clock.now_ms, deliver_ms)
            self._deliver(entry)

    def rpc(self, src: str, dst: str, payload: bytes,
            origin: str = "", credential: str = "") -> bytes:
        """Send a request and pump the event loop until its response lands;
        resend on timeout. Raises Unreachable when retries are exhausted."""
        req_id = next(self._req_ids)
        for attempt in range(self.retries):
            self._send("req", src, dst, payload, req_id,
                       origin=origin or src, credential=credential)
            response = self._pump_until(self.clock.now_ms + self.timeout_ms, req_id)
            if response is not None:
                return response
            self._emit("bus.timeout", src=src, dst=dst, req=req_id, attempt=attempt)
        raise Unreachable(f"{dst} gave no response after {self.retries} attempts")
