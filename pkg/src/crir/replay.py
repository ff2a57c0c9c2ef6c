"""Prioritized experience replay over raw interaction histories.

Transitions store raw histories only; representations are always recomputed
under current parameters by the consumers.  Priorities live in a sum/max
segment-tree pair: the sum tree holds ``priority**alpha`` for sampling, the
max tree tracks raw priorities so new transitions enter at the current max.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .staterep import BehaviorRecord

__all__ = ["ReplayBuffer", "SumTree", "Transition"]

SNAPSHOT_MAGIC = b"CRIRBUF1"


@dataclass
class Transition:
    """One stored interaction step."""

    user: object
    history: tuple
    action: np.ndarray
    reward: float
    next_history: tuple
    done: bool
    priority: float = 1.0
    _cache: dict = field(default_factory=dict, repr=False)

    def history_arrays(self):
        if "h" not in self._cache:
            self._cache["h"] = _split_history(self.history)
        return self._cache["h"]

    def next_history_arrays(self):
        if "nh" not in self._cache:
            self._cache["nh"] = _split_history(self.next_history)
        return self._cache["nh"]


def _split_history(history) -> tuple[np.ndarray, np.ndarray]:
    recs = list(history)
    fb = np.asarray([r.feedback for r in recs], dtype=np.float64)
    if recs and isinstance(recs[0].item, np.ndarray):
        items = np.asarray([r.item for r in recs], dtype=np.float64)
    else:
        items = np.asarray([r.item for r in recs], dtype=np.int64) if recs else np.zeros(0, dtype=np.int64)
    return items, fb


class SumTree:
    """Flat binary segment tree keeping subtree sums and maxima.

    Leaves sit at ``capacity + i``; every internal node is recomputed as the
    exact sum (and max) of its children on each update.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.sums = np.zeros(2 * capacity)
        self.maxs = np.zeros(2 * capacity)

    def set_leaf(self, idx: int, sample_mass: float, raw: float) -> None:
        j = self.capacity + idx
        self.sums[j] = sample_mass
        self.maxs[j] = raw
        j //= 2
        while j >= 1:
            left, right = 2 * j, 2 * j + 1
            self.sums[j] = self.sums[left] + (self.sums[right] if right < 2 * self.capacity else 0.0)
            self.maxs[j] = max(self.maxs[left], self.maxs[right] if right < 2 * self.capacity else 0.0)
            j //= 2

    def leaf_mass(self, idx: int) -> float:
        return float(self.sums[self.capacity + idx])

    @property
    def total(self) -> float:
        return float(self.sums[1])

    @property
    def max_raw(self) -> float:
        return float(self.maxs[1])

    def find_prefix(self, v: float) -> int:
        """Leaf index whose cumulative mass interval contains ``v``."""
        j = 1
        while j < self.capacity:
            left = 2 * j
            if self.sums[left] >= v:
                j = left
            else:
                v -= self.sums[left]
                j = 2 * j + 1
        return j - self.capacity


class ReplayBuffer:
    """Ring buffer with priority-proportional and uniform sampling."""

    def __init__(self, capacity: int = 100000, alpha: float = 0.6,
                 priority_epsilon: float = 1e-3, rng: np.random.Generator | None = None):
        self.capacity = capacity
        self.alpha = alpha
        self.priority_epsilon = priority_epsilon
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.tree = SumTree(capacity)
        self.slots: list[Transition | None] = [None] * capacity
        self.raw_priority = np.zeros(capacity)
        self.stamp = np.full(capacity, -1, dtype=np.int64)
        self.size = 0
        self.next_pos = 0
        self.push_count = 0
        self.stale_update_count = 0

    def __len__(self) -> int:
        return self.size

    def push(self, transition: Transition) -> int:
        """Insert at the current max raw priority (1.0 into an empty buffer)."""
        slot = self.next_pos
        raw = self.tree.max_raw if self.size > 0 else 1.0
        self.slots[slot] = transition
        self.stamp[slot] = self.push_count
        self.push_count += 1
        self._set_priority(slot, raw)
        self.next_pos = (self.next_pos + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        return slot

    def _set_priority(self, slot: int, raw: float) -> None:
        self.raw_priority[slot] = raw
        self.slots[slot].priority = raw
        self.tree.set_leaf(slot, raw**self.alpha, raw)

    def sample_per(self, batch_size: int, beta: float):
        """Stratified priority sampling.

        Returns ``(transitions, importance_weights, indices)`` where indices
        is an int array [batch, 2] of (slot, stamp) pairs for the later
        priority refresh.  Weights are (N * P(i))^-beta, normalized by the
        batch max.
        """
        if self.size < batch_size:
            raise ValueError(f"buffer holds {self.size} < batch size {batch_size}")
        total = self.tree.total
        seg = total / batch_size
        slots = np.empty(batch_size, dtype=np.int64)
        for i in range(batch_size):
            v = (i + self.rng.random()) * seg
            slots[i] = self.tree.find_prefix(min(v, np.nextafter(total, 0.0)))
        mass = np.array([self.tree.leaf_mass(int(s)) for s in slots])
        probs = mass / total
        weights = (self.size * probs) ** (-beta)
        weights = weights / weights.max()
        indices = np.stack([slots, self.stamp[slots]], axis=1)
        return [self.slots[int(s)] for s in slots], weights, indices

    def sample_uniform(self, batch_size: int) -> list[Transition]:
        """Uniform sampling without replacement within the batch."""
        if self.size < batch_size:
            raise ValueError(f"buffer holds {self.size} < batch size {batch_size}")
        chosen = self.rng.choice(self.size, size=batch_size, replace=False)
        return [self.slots[int(s)] for s in chosen]

    def update_priorities(self, indices: np.ndarray, td_magnitudes) -> None:
        """Refresh leaf priorities to |delta| + epsilon; stale slots are skipped."""
        mags = np.asarray(td_magnitudes, dtype=np.float64)
        for (slot, stamp), mag in zip(np.asarray(indices, dtype=np.int64), mags):
            if self.stamp[slot] != stamp or self.slots[slot] is None:
                self.stale_update_count += 1
                continue
            self._set_priority(int(slot), float(mag) + self.priority_epsilon)

    # --- snapshot ----------------------------------------------------------
    def save(self, path) -> None:
        """Binary snapshot: little-endian, length-prefixed records."""
        with open(path, "wb") as fh:
            fh.write(SNAPSHOT_MAGIC)
            fh.write(struct.pack("<IIIQ", self.capacity, self.size, self.next_pos, self.push_count))
            order = [(self.next_pos - self.size + k) % self.capacity for k in range(self.size)]
            for slot in order:
                payload = _encode_transition(self.slots[slot], self.raw_priority[slot], self.stamp[slot])
                fh.write(struct.pack("<I", len(payload)))
                fh.write(payload)

    @classmethod
    def load(cls, path, alpha: float = 0.6, priority_epsilon: float = 1e-3) -> "ReplayBuffer":
        with open(path, "rb") as fh:
            magic = fh.read(8)
            if magic != SNAPSHOT_MAGIC:
                raise ValueError(f"not a replay snapshot (header {magic!r})")
            capacity, size, next_pos, push_count = struct.unpack("<IIIQ", fh.read(20))
            buf = cls(capacity=capacity, alpha=alpha, priority_epsilon=priority_epsilon)
            slot = (next_pos - size) % capacity if size else next_pos
            for _ in range(size):
                (length,) = struct.unpack("<I", fh.read(4))
                transition, raw, stamp = _decode_transition(fh.read(length))
                buf.slots[slot] = transition
                buf.stamp[slot] = stamp
                buf._set_priority(slot, raw)
                slot = (slot + 1) % capacity
            buf.size = size
            buf.next_pos = next_pos
            buf.push_count = push_count
            return buf


def _pack_vector(v: np.ndarray) -> bytes:
    arr = np.asarray(v, dtype="<f8").ravel()
    return struct.pack("<I", arr.size) + arr.tobytes()


def _unpack_vector(buf: memoryview, off: int) -> tuple[np.ndarray, int]:
    (n,) = struct.unpack_from("<I", buf, off)
    off += 4
    arr = np.frombuffer(buf, dtype="<f8", count=n, offset=off).copy()
    return arr, off + 8 * n


def _encode_item(item) -> bytes:
    if isinstance(item, np.ndarray):
        return b"\x01" + _pack_vector(item)
    return b"\x00" + struct.pack("<q", int(item))


def _decode_item(buf: memoryview, off: int):
    kind = buf[off]
    off += 1
    if kind == 1:
        return _unpack_vector(buf, off)
    (v,) = struct.unpack_from("<q", buf, off)
    return v, off + 8


def _encode_history(history) -> bytes:
    out = [struct.pack("<I", len(history))]
    for rec in history:
        out.append(_encode_item(rec.item))
        out.append(struct.pack("<dI", rec.feedback, rec.step_index))
    return b"".join(out)


def _decode_history(buf: memoryview, off: int):
    (n,) = struct.unpack_from("<I", buf, off)
    off += 4
    recs = []
    for _ in range(n):
        item, off = _decode_item(buf, off)
        feedback, step_index = struct.unpack_from("<dI", buf, off)
        off += 12
        recs.append(BehaviorRecord(item=item, feedback=feedback, step_index=step_index))
    return tuple(recs), off


def _encode_transition(t: Transition, raw_priority: float, stamp: int) -> bytes:
    out = [_encode_item(t.user), _pack_vector(t.action), struct.pack("<d?dq", t.reward, t.done, raw_priority, stamp)]
    out.append(_encode_history(t.history))
    shared = len(t.next_history) == len(t.history)
    out.append(struct.pack("<?", shared))
    if not shared:
        out.append(_encode_history(t.next_history[len(t.history):]))
    return b"".join(out)


def _decode_transition(data: bytes):
    buf = memoryview(data)
    user, off = _decode_item(buf, 0)
    action, off = _unpack_vector(buf, off)
    reward, done, raw, stamp = struct.unpack_from("<d?dq", buf, off)
    off += 25
    history, off = _decode_history(buf, off)
    (shared,) = struct.unpack_from("<?", buf, off)
    off += 1
    if shared:
        next_history = history
    else:
        tail, off = _decode_history(buf, off)
        next_history = history + tail
    t = Transition(user=user, history=history, action=action, reward=reward,
                   next_history=next_history, done=done, priority=raw)
    return t, raw, stamp
