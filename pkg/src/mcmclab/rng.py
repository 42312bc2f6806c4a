"""Seedable, splittable random streams and deterministic replica fan-out."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")

THREADS_ENV = "MCMCLAB_THREADS"


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream identified by ``(master_seed, stream_id)``.

    Streams are built on numpy's ``SeedSequence`` spawn keys, so distinct
    identifiers give statistically independent PCG64 generators and the same
    identifier always gives the same sequence.
    """

    master_seed: int = 0
    stream_id: int = 0
    path: tuple[int, ...] = field(default=())

    def substream(self, index: int) -> "RngStream":
        return RngStream(self.master_seed, self.stream_id, self.path + (int(index),))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(
            entropy=int(self.master_seed) & (2**64 - 1),
            spawn_key=(int(self.stream_id) & (2**64 - 1),) + self.path,
        )
        return np.random.Generator(np.random.PCG64(seq))


def as_generator(rng) -> np.random.Generator:
    """Accept an RngStream, a Generator, an int seed or None."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    if rng is None:
        return RngStream().generator()
    return RngStream(int(rng)).generator()


def as_stream(rng) -> RngStream:
    if isinstance(rng, RngStream):
        return rng
    if rng is None:
        return RngStream()
    if isinstance(rng, np.random.Generator):
        # Derive a stream from the generator state so block splitting still works.
        return RngStream(int(rng.integers(0, 2**63)))
    return RngStream(int(rng))


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n <= 0:
        n = os.cpu_count() or 1
    return max(1, n)


def run_blocks(fn: Callable[[int], T], n_blocks: int, workers: int | None = None) -> list[T]:
    """Run ``fn(block_index)`` for every block and return results in index order.

    Each block must draw only from its own substream; the output then does not
    depend on how many workers run it.
    """
    workers = worker_count() if workers is None else max(1, workers)
    if workers == 1 or n_blocks <= 1:
        return [fn(i) for i in range(n_blocks)]
    with ThreadPoolExecutor(max_workers=min(workers, n_blocks)) as pool:
        return list(pool.map(fn, range(n_blocks)))


def block_sizes(total: int, block: int) -> Sequence[int]:
    full, rest = divmod(int(total), int(block))
    return [block] * full + ([rest] if rest else [])
