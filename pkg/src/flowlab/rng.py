"""Counter-based random streams.

Every Brownian increment is addressed by the tuple (seed, stream, step,
row): step k of stream s under master seed draws an (n, m) standard-normal
block from a Philox generator keyed by SeedSequence((seed, stream, step)),
and row i of that block belongs to noise slot i. The draw for a given
address never depends on scheduling, worker count, or how many other
streams exist, which is what makes ensembles reproducible bit-for-bit.
"""
from __future__ import annotations

import numpy as np


def philox_key(seed: int, stream: int, step: int) -> np.ndarray:
    """128-bit Philox key for (seed, stream, step)."""
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1),
                                spawn_key=(int(stream), int(step)))
    return ss.generate_state(2, np.uint64)


def normal_block(seed: int, stream: int, step: int, n: int, m: int) -> np.ndarray:
    """Standard-normal block of shape (n, m) at the given address."""
    gen = np.random.Generator(np.random.Philox(key=philox_key(seed, stream, step)))
    return gen.standard_normal((n, m))


def uniform_block(seed: int, stream: int, step: int, n: int) -> np.ndarray:
    """Uniform(0,1) block of shape (n,); separate tag keeps it disjoint from normals."""
    gen = np.random.Generator(np.random.Philox(key=philox_key(seed, stream + 2**31, step)))
    return gen.uniform(size=n)


def child_stream(stream: int, index: int) -> int:
    """Derive a sub-stream id, e.g. one per grid point or per parameter value."""
    return (int(stream) * 1_000_003 + int(index) + 1) & (2**31 - 1)
