"""Replay storage with a pinned offline prefix, and the ``.tds`` dataset format.

``.tds`` layout, little-endian::

    uint32 state_dim, uint32 action_dim, uint32 count
    count x { float32 s[state_dim], float32 a[action_dim], float32 r,
              float32 s2[state_dim], uint8 done }

Records are packed without padding.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from expo.errors import CheckpointError, ConfigurationError, UsageError

STORAGE = np.float32


@dataclass
class Transition:
    s: np.ndarray
    a: np.ndarray
    r: float
    s2: np.ndarray
    done: bool


@dataclass
class Batch:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s2: np.ndarray
    done: np.ndarray

    def __len__(self):
        return len(self.r)


class ReplayBuffer:
    def __init__(self, state_dim, action_dim, capacity=1_000_000, symmetric_sampling=False):
        if capacity < 1:
            raise ConfigurationError("capacity must be positive")
        self.state_dim, self.action_dim = int(state_dim), int(action_dim)
        self.capacity = int(capacity)
        self.symmetric_sampling = symmetric_sampling
        self.count = 0
        self.offline_count = 0
        self._seeded = False
        self._next = 0  # next online write position (absolute index)
        self._alloc = 0
        self._grow(min(self.capacity, 4096))

    def _grow(self, n):
        n = min(max(n, 1), self.capacity)
        if n <= self._alloc:
            return
        sd, ad = self.state_dim, self.action_dim

        def extend(old, shape, dtype):
            new = np.zeros((n,) + shape, dtype)
            if old is not None:
                new[: len(old)] = old
            return new

        self.s = extend(getattr(self, "s", None), (sd,), STORAGE)
        self.a = extend(getattr(self, "a", None), (ad,), STORAGE)
        self.r = extend(getattr(self, "r", None), (), STORAGE)
        self.s2 = extend(getattr(self, "s2", None), (sd,), STORAGE)
        self.done = extend(getattr(self, "done", None), (), np.bool_)
        self._alloc = n

    @property
    def online_count(self):
        return self.count - self.offline_count

    def __len__(self):
        return self.count

    def _write(self, i, t):
        s = np.asarray(t.s, dtype=np.float64).reshape(-1)
        a = np.asarray(t.a, dtype=np.float64).reshape(-1)
        s2 = np.asarray(t.s2, dtype=np.float64).reshape(-1)
        if s.size != self.state_dim or s2.size != self.state_dim or a.size != self.action_dim:
            raise ConfigurationError("transition dimensions do not match the buffer")
        if not np.isfinite(t.r):
            raise ConfigurationError("reward must be finite")
        self.s[i], self.a[i], self.r[i], self.s2[i], self.done[i] = s, a, t.r, s2, bool(t.done)

    def seed(self, dataset):
        """Insert the offline dataset as a prefix that is never evicted."""
        if self._seeded or self.count:
            raise UsageError("buffer can only be seeded once, while empty")
        dataset = list(dataset)
        if len(dataset) > self.capacity:
            raise ConfigurationError(
                f"dataset of {len(dataset)} transitions exceeds capacity {self.capacity}"
            )
        self._grow(max(len(dataset) + 1, self._alloc))
        for i, t in enumerate(dataset):
            self._write(i, t)
        self.count = self.offline_count = len(dataset)
        self._next = self.count
        self._seeded = True

    def push(self, t):
        """Append an online transition, evicting the oldest online entry when full."""
        if self.offline_count >= self.capacity:
            raise UsageError("no room for online transitions: offline data fills the buffer")
        if self._next >= self.capacity:
            self._next = self.offline_count
        if self._next >= self._alloc:
            self._grow(2 * self._alloc)
        self._write(self._next, t)
        self._next += 1
        self.count = min(self.count + 1, self.capacity)

    def get(self, idx):
        """Batch at explicit indices."""
        idx = np.asarray(idx, dtype=np.int64)
        return Batch(self.s[idx].astype(np.float64), self.a[idx].astype(np.float64),
                     self.r[idx].astype(np.float64), self.s2[idx].astype(np.float64),
                     self.done[idx].astype(np.float64))

    def sample_indices(self, batch_size, rng):
        if self.count == 0:
            raise UsageError("cannot sample from an empty buffer")
        off, on = self.offline_count, self.online_count
        if self.symmetric_sampling and off and on:
            half = batch_size // 2
            return np.concatenate([rng.integers(0, off, size=half),
                                   rng.integers(off, off + on, size=batch_size - half)])
        return rng.integers(0, self.count, size=batch_size)

    def sample(self, batch_size, rng):
        """Uniform with replacement over offline and online entries together."""
        return self.get(self.sample_indices(batch_size, rng))

    def transitions(self):
        return [Transition(self.s[i].copy(), self.a[i].copy(), float(self.r[i]),
                           self.s2[i].copy(), bool(self.done[i])) for i in range(self.count)]


def _record_dtype(state_dim, action_dim):
    return np.dtype([("s", "<f4", (state_dim,)), ("a", "<f4", (action_dim,)), ("r", "<f4"),
                     ("s2", "<f4", (state_dim,)), ("done", "u1")])


def save_dataset(path, transitions, state_dim=None, action_dim=None):
    transitions = list(transitions)
    if state_dim is None or action_dim is None:
        if not transitions:
            raise ConfigurationError("dimensions are required to save an empty dataset")
        state_dim = np.asarray(transitions[0].s).size
        action_dim = np.asarray(transitions[0].a).size
    rec = np.zeros(len(transitions), dtype=_record_dtype(state_dim, action_dim))
    for i, t in enumerate(transitions):
        rec[i] = (np.asarray(t.s).reshape(-1), np.asarray(t.a).reshape(-1), t.r,
                  np.asarray(t.s2).reshape(-1), int(bool(t.done)))
    with open(path, "wb") as f:
        f.write(struct.pack("<III", state_dim, action_dim, len(transitions)))
        f.write(rec.tobytes())


_MAX_DIM = 4096


def load_dataset(path):
    """Returns ``(transitions, state_dim, action_dim)``."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"dataset not found: {path}")
    raw = path.read_bytes()
    if len(raw) < 12:
        raise CheckpointError(f"{path}: truncated header")
    state_dim, action_dim, count = struct.unpack_from("<III", raw, 0)
    if not (0 < state_dim <= _MAX_DIM and 0 < action_dim <= _MAX_DIM):
        raise CheckpointError(f"{path}: implausible dimensions ({state_dim}, {action_dim})")
    dt = _record_dtype(state_dim, action_dim)
    if len(raw) - 12 != count * dt.itemsize:
        raise CheckpointError(f"{path}: expected {count} records of {dt.itemsize} bytes")
    rec = np.frombuffer(raw, dtype=dt, offset=12, count=count)
    out = [Transition(r["s"].copy(), r["a"].copy(), float(r["r"]), r["s2"].copy(), bool(r["done"]))
           for r in rec]
    return out, state_dim, action_dim
