"""Reproducible random streams and block-parallel execution.

Every Monte Carlo replication block ``i`` draws from its own Philox stream
keyed by ``SeedSequence(seed, spawn_key=(i,))``.  Work is always cut into the
same blocks regardless of how many worker threads run them, and block results
are reduced in block order, so output does not depend on scheduling.
"""
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

MAX_SEED = 2**64 - 1


def stream(seed, index):
    """Counter-based stream number ``index`` derived from the master ``seed``."""
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


def thread_count(requested=None):
    env = os.environ.get("HEAVYTAIL_THREADS")
    n = requested if requested is not None else (os.cpu_count() or 1)
    if env:
        n = min(n, int(env))
    return max(1, int(n))


def run_blocks(fn, n_blocks, seed, threads=None, offset=0):
    """Run ``fn(index, rng)`` for each block and return results in block order."""
    idx = range(offset, offset + n_blocks)
    workers = min(thread_count(threads), max(1, n_blocks))
    if workers == 1:
        return [fn(i, stream(seed, i)) for i in idx]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda i: fn(i, stream(seed, i)), idx))


def split(total, block):
    """Sizes of consecutive blocks covering ``total`` items."""
    total = int(total)
    sizes = [block] * (total // block)
    if total % block:
        sizes.append(total % block)
    return sizes
