"""Deterministic random substreams and block-parallel replication.

Replications are cut into fixed-size blocks. Block ``i`` always draws from the
stream keyed by ``(seed, key, i)``, and block results are reassembled in block
order, so outputs do not depend on how many workers ran them.
"""
from __future__ import annotations

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, TypeVar

import numpy as np

T = TypeVar("T")

DEFAULT_BLOCK = 1 << 14


def default_workers() -> int:
    raw = os.environ.get("SIPP_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _key_words(key: str) -> list[int]:
    digest = hashlib.blake2b(key.encode("utf-8"), digest_size=16).digest()
    return [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]


@dataclass(frozen=True)
class Streams:
    """Factory of independent generators keyed by (seed, key, block index)."""

    seed: int
    key: str = ""
    block: int = DEFAULT_BLOCK
    workers: int = 1

    def __post_init__(self):
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.block < 1 or self.workers < 1:
            raise ValueError("block and workers must be positive")

    def child(self, key: str) -> "Streams":
        return replace(self, key=f"{self.key}/{key}" if self.key else key)

    def generator(self, index: int = 0) -> np.random.Generator:
        ss = np.random.SeedSequence([self.seed, *_key_words(self.key), index])
        return np.random.Generator(np.random.PCG64(ss))

    def block_sizes(self, reps: int) -> list[int]:
        full, rest = divmod(reps, self.block)
        return [self.block] * full + ([rest] if rest else [])

    def map(self, fn: Callable[[int, np.random.Generator], T], reps: int) -> list[T]:
        """Run ``fn(block_reps, generator)`` over all blocks, results in block order."""
        sizes = self.block_sizes(reps)
        jobs = [(size, i) for i, size in enumerate(sizes)]

        def run(job):
            size, i = job
            return fn(size, self.generator(i))

        if self.workers == 1 or len(jobs) <= 1:
            return [run(j) for j in jobs]
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            return list(pool.map(run, jobs))


def as_streams(rng, key: str = "", workers: int | None = None) -> Streams:
    """Coerce a seed, Generator or Streams into a keyed Streams factory.

    A Generator is consumed once to draw the master seed.
    """
    if isinstance(rng, Streams):
        out = rng.child(key) if key else rng
        return replace(out, workers=workers) if workers else out
    if isinstance(rng, np.random.Generator):
        seed = int(rng.integers(0, 2**63 - 1))
    elif rng is None:
        seed = int(np.random.SeedSequence().entropy % (2**63))
    else:
        seed = int(rng)
    return Streams(seed=seed, key=key, workers=workers or default_workers())


def concat(parts: list[np.ndarray]) -> np.ndarray:
    return np.concatenate(parts) if parts else np.empty(0)
