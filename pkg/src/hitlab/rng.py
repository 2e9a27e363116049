"""Counter-based random streams.

Path p of a run with master seed s draws from its own Philox stream, keyed by
s and started at counter p * 2**128. Any path can be regenerated on its own,
so results do not depend on how paths are split across workers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np

DEFAULT_SEED = 20240601
CHUNK = 256  # keeps per-chunk buffers below the allocator's mmap threshold


def master_key(seed: int) -> np.ndarray:
    if seed < 0 or seed >= 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return np.random.SeedSequence(int(seed)).generate_state(2, np.uint64)


def path_generator(seed: int, path: int, key: np.ndarray | None = None) -> np.random.Generator:
    key = master_key(seed) if key is None else key
    return np.random.Generator(np.random.Philox(key=key, counter=int(path) << 128))


def path_normals(seed: int, start: int, count: int, shape: tuple) -> np.ndarray:
    """Standard normals for paths start..start+count-1, shape (count, *shape)."""
    key = master_key(seed)
    out = np.empty((count,) + tuple(shape))
    for i in range(count):
        out[i] = path_generator(seed, start + i, key).standard_normal(shape)
    return out


def chunk_bounds(n_paths: int, chunk: int = CHUNK) -> list[tuple[int, int]]:
    """Fixed chunking of the path range, independent of the worker count."""
    return [(s, min(s + chunk, n_paths)) for s in range(0, n_paths, chunk)]


def map_chunks(fn: Callable[[int, int], object], n_paths: int, threads: int = 1, chunk: int = CHUNK) -> list:
    """Apply fn(start, stop) to every chunk and return results in chunk order."""
    bounds = chunk_bounds(n_paths, chunk)
    if threads <= 1 or len(bounds) <= 1:
        return [fn(s, e) for s, e in bounds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda b: fn(*b), bounds))
