"""Rank-to-rank transport.

``Transport`` is the per-rank communication endpoint solver code talks to
(think of an MPI communicator bound to one rank). ``InProcessHub`` wires P
endpoints together with FIFO queues so P worker threads can run a
distributed solve inside one process. Point-to-point payloads cross the hub
in the binary wire format below, the same bytes a socket- or process-based
backend would carry.

Wire format (little-endian)::

    header  = epoch:u64  src:u32  dst:u32  nbytes:u64
    payload = nbytes / 8 float64 values, ordered by ascending global index
"""

from __future__ import annotations

import queue
import struct
import threading
import time
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..errors import TransportError

HEADER = struct.Struct("<QIIQ")
DEFAULT_TIMEOUT = 30.0
_POLL = 0.05


def encode_message(epoch: int, src: int, dst: int, payload) -> bytes:
    data = np.ascontiguousarray(payload, dtype="<f8").tobytes()
    return HEADER.pack(epoch, src, dst, len(data)) + data


def decode_message(buf: bytes):
    """Return ``(epoch, src, dst, payload)``; raises on truncated input."""
    if len(buf) < HEADER.size:
        raise TransportError(f"message shorter than {HEADER.size}-byte header")
    epoch, src, dst, nbytes = HEADER.unpack_from(buf)
    body = buf[HEADER.size:]
    if len(body) != nbytes or nbytes % 8:
        raise TransportError(f"payload length {len(body)} does not match header ({nbytes})")
    return epoch, src, dst, np.frombuffer(body, dtype="<f8").astype(np.float64)


@dataclass
class TransportStats:
    messages_sent: int = 0
    bytes_sent: int = 0
    messages_received: int = 0
    halo_exchanges: int = 0
    all_reduces: int = 0
    log: list = field(default_factory=list)

    def record(self, *event):
        self.log.append(event)


@dataclass
class RecvRequest:
    src: int
    epoch: int


class Transport(ABC):
    """One rank's view of the communication layer."""

    rank: int
    size: int
    stats: TransportStats

    @abstractmethod
    def isend(self, dst: int, epoch: int, payload) -> None:
        """Queue ``payload`` for ``dst``; returns without waiting."""

    @abstractmethod
    def irecv(self, src: int, epoch: int) -> RecvRequest:
        """Post a receive; data is available after :meth:`synchronize`."""

    @abstractmethod
    def synchronize(self, requests) -> list:
        """Block until every posted receive has arrived; return payloads in order."""

    @abstractmethod
    def all_reduce_sum(self, value: float) -> float:
        """Sum of ``value`` over all ranks, identical on every rank."""

    def next_epoch(self) -> int:
        self._epoch = getattr(self, "_epoch", 0) + 1
        return self._epoch

    def claim_epoch(self, epoch: int) -> None:
        """Enforce strictly increasing point-to-point epochs on this rank."""
        last = getattr(self, "_last_epoch", 0)
        if epoch <= last:
            raise TransportError(f"rank {self.rank}: epoch {epoch} not after {last}")
        self._last_epoch = epoch
        self._epoch = max(getattr(self, "_epoch", 0), epoch)


class InProcessHub:
    """Shared state for ``size`` in-process endpoints."""

    def __init__(self, size: int, timeout: float = DEFAULT_TIMEOUT):
        if size < 1:
            raise ValueError("size must be at least 1")
        self.size = size
        self.timeout = timeout
        self._queues = {(s, d): queue.Queue() for s in range(size) for d in range(size) if s != d}
        self._barrier = threading.Barrier(size)
        self._lock = threading.Lock()
        self._slots: dict[int, list] = {}
        self._readers: dict[int, int] = {}
        self._aborted = threading.Event()
        self.endpoints = [InProcessTransport(self, r) for r in range(size)]

    def abort(self):
        self._aborted.set()
        self._barrier.abort()

    def _put(self, src, dst, data: bytes):
        self._queues[(src, dst)].put(data)

    def _get(self, src, dst) -> bytes:
        deadline = time.monotonic() + self.timeout
        q = self._queues[(src, dst)]
        while True:
            if self._aborted.is_set():
                raise TransportError(f"rank {dst}: transport aborted while waiting on rank {src}")
            try:
                return q.get(timeout=_POLL)
            except queue.Empty:
                if time.monotonic() > deadline:
                    raise TransportError(
                        f"rank {dst}: no message from rank {src} within {self.timeout:g} s"
                    ) from None

    def _all_reduce(self, rank, seq, value):
        with self._lock:
            slot = self._slots.setdefault(seq, [None] * self.size)
            slot[rank] = value
        try:
            self._barrier.wait(timeout=self.timeout)
        except threading.BrokenBarrierError:
            raise TransportError(
                f"rank {rank}: all_reduce #{seq} incomplete (missing rank or timeout after {self.timeout:g} s)"
            ) from None
        with self._lock:
            values = self._slots[seq]
            self._readers[seq] = self._readers.get(seq, 0) + 1
            if self._readers[seq] == self.size:
                del self._slots[seq], self._readers[seq]
        if any(v is None for v in values):
            raise TransportError(f"all_reduce #{seq}: contribution missing")
        # rank-ordered sequential sum: bitwise identical on every rank and run
        total = values[0]
        for v in values[1:]:
            total = total + v
        return total


class InProcessTransport(Transport):
    def __init__(self, hub: InProcessHub, rank: int):
        self.hub = hub
        self.rank = rank
        self.size = hub.size
        self.stats = TransportStats()
        self._coll_seq = 0

    def isend(self, dst, epoch, payload):
        if not 0 <= dst < self.size or dst == self.rank:
            raise TransportError(f"rank {self.rank}: invalid destination {dst}")
        data = encode_message(epoch, self.rank, dst, payload)
        self.hub._put(self.rank, dst, data)
        self.stats.messages_sent += 1
        self.stats.bytes_sent += len(data)
        self.stats.record("send", dst, epoch, len(data))

    def irecv(self, src, epoch):
        if not 0 <= src < self.size or src == self.rank:
            raise TransportError(f"rank {self.rank}: invalid source {src}")
        return RecvRequest(src, epoch)

    def synchronize(self, requests):
        out = []
        for req in requests:
            epoch, src, dst, payload = decode_message(self.hub._get(req.src, self.rank))
            if src != req.src or dst != self.rank:
                raise TransportError(f"rank {self.rank}: misrouted message {src}->{dst}")
            if epoch != req.epoch:
                raise TransportError(
                    f"rank {self.rank}: epoch mismatch from rank {src} (expected {req.epoch}, got {epoch})"
                )
            self.stats.messages_received += 1
            out.append(payload)
        return out

    def all_reduce_sum(self, value):
        seq = self._coll_seq
        self._coll_seq += 1
        self.stats.all_reduces += 1
        self.stats.record("all_reduce", seq)
        return self.hub._all_reduce(self.rank, seq, float(value))


def run_ranks(size: int, fn, *args, timeout: float = DEFAULT_TIMEOUT, **kwargs):
    """Run ``fn(transport, *args, **kwargs)`` on ``size`` worker threads.

    Returns ``(results, transports)`` indexed by rank. If any rank raises,
    the hub is aborted so peers fail fast, and the first error is re-raised.
    """
    hub = InProcessHub(size, timeout)

    def work(t):
        try:
            return fn(t, *args, **kwargs)
        except BaseException:
            hub.abort()
            raise

    with ThreadPoolExecutor(max_workers=size, thread_name_prefix="rank") as pool:
        futures = [pool.submit(work, t) for t in hub.endpoints]
        errors = [f.exception() for f in futures]
    primary = [e for e in errors if e is not None and not isinstance(e, TransportError)]
    if primary or any(errors):
        raise (primary or [e for e in errors if e is not None])[0]
    return [f.result() for f in futures], hub.endpoints
