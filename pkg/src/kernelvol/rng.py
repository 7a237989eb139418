"""Deterministic counter-based substreams for parallel-safe simulation.

Noise is organized in fixed-size path blocks. Block ``b`` of logical stream
``(seed, stream)`` draws from a Philox generator keyed by
``(seed, stream, b)``, so any path's noise is a pure function of
``(seed, stream, path index)`` and results cannot depend on scheduling or
thread count.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

PATH_BLOCK = 1 << 16


def block_generator(seed: int, stream: int, block: int) -> np.random.Generator:
    """Generator for one path block of one logical stream."""
    ss = np.random.SeedSequence([int(seed), int(stream), int(block)])
    return np.random.Generator(np.random.Philox(ss))


def iter_path_blocks(n_paths: int) -> Iterator[tuple[int, int, int]]:
    """Yield ``(block_index, start, size)`` covering ``range(n_paths)``."""
    block = 0
    start = 0
    while start < n_paths:
        size = min(PATH_BLOCK, n_paths - start)
        yield block, start, size
        block += 1
        start += size
