"""Counter-based random streams for reproducible parallel Monte Carlo.

Every batch of Wiener increments is drawn from a Philox generator whose
128-bit key encodes ``(seed, purpose, step index, block index)``. A block is
one evaluation point (all of its trajectories), or block 0 when a single
noise realisation is shared across many curve nodes. Because the key alone
fixes the output, any partition of blocks over worker processes reproduces
identical increments: nothing depends on draw order, scheduling or worker
count.

Layout of the second key word: ``purpose(8) | step(28) | block(28)`` bits.
"""

from __future__ import annotations

import numpy as np
from numpy.random import Generator, Philox

from .errors import UsageError

_STEP_BITS = 28
_BLOCK_BITS = 28

PURPOSE_PATHS = 1
PURPOSE_PICARD = 2


def keyed_generator(seed: int, purpose: int, step: int, block: int) -> Generator:
    """Generator for one (seed, purpose, step, block) cell of the stream lattice."""
    if not (0 <= step < (1 << _STEP_BITS)):
        raise UsageError(f"step index {step} out of range")
    if not (0 <= block < (1 << _BLOCK_BITS)):
        raise UsageError(f"block index {block} out of range")
    word = (np.uint64(purpose) << np.uint64(_STEP_BITS + _BLOCK_BITS)) \
        | (np.uint64(step) << np.uint64(_BLOCK_BITS)) | np.uint64(block)
    key = np.array([np.uint64(seed) & np.uint64(0xFFFFFFFFFFFFFFFF), word], dtype=np.uint64)
    return Generator(Philox(key=key))


def step_block(seed: int, purpose: int, step: int, block: int, n: int, dim: int,
               antithetic: bool = False):
    """Increments for one block at one step.

    Returns ``(normals, uniforms)`` with shapes ``(n, dim)`` and ``(n,)``.
    The normals drive the Wiener increments, the uniforms the within-step
    wall-absorption test. With ``antithetic=True`` odd rows mirror even rows
    (``Z -> -Z``, ``U -> 1-U``), pairing trajectories 2k and 2k+1.
    """
    g = keyed_generator(seed, purpose, step, block)
    if antithetic:
        half = (n + 1) // 2
        z = g.standard_normal((half, dim))
        u = g.random(half)
        normals = np.empty((2 * half, dim))
        normals[0::2] = z
        normals[1::2] = -z
        uniforms = np.empty(2 * half)
        uniforms[0::2] = u
        uniforms[1::2] = 1.0 - u
        return normals[:n], uniforms[:n]
    z = g.standard_normal((n, dim))
    u = g.random(n)
    return z, u
