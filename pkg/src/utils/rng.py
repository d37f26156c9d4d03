"""Reproducible random streams.

Noise draws are addressed by a global index: draw ``i`` of stream ``seed`` is
the same value whether it is generated alone, as part of a range, or on
another worker. The stream is cut into fixed-size blocks; every block gets
its own Philox counter offset, so blocks never overlap.
"""
from typing import Tuple

import numpy as np

BLOCK_SIZE = 1 << 16  # changing this changes every stream

_MANTISSA_SHIFT = np.uint64(12)
_SCALE = 2.0 ** -52


def _block_uniforms(seed: int, block: int) -> np.ndarray:
    counter = np.array([0, block, 0, 0], dtype=np.uint64)
    bit_generator = np.random.Philox(key=int(seed), counter=counter)
    raw = bit_generator.random_raw(BLOCK_SIZE)
    # 52-bit midpoints: strictly inside (0, 1), never 0 or 1
    return ((raw >> _MANTISSA_SHIFT).astype(np.float64) + 0.5) * _SCALE


def indexed_uniforms(seed: int, start: int, count: int) -> np.ndarray:
    """Uniforms on the open interval (0, 1) for indices ``start .. start + count - 1``"""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    if start < 0 or count < 0:
        raise ValueError(f"invalid index range start={start} count={count}")
    if count == 0:
        return np.empty(0, dtype=np.float64)

    first_block = start // BLOCK_SIZE
    last_block = (start + count - 1) // BLOCK_SIZE
    blocks = [_block_uniforms(seed, b) for b in range(first_block, last_block + 1)]
    stream = np.concatenate(blocks) if len(blocks) > 1 else blocks[0]
    offset = start - first_block * BLOCK_SIZE
    return stream[offset : offset + count]


def derive_seed(master_seed: int, *keys: int) -> int:
    """Independent child seed for the grid cell addressed by ``keys``"""
    sequence = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in keys))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def split_range(count: int, chunk: int) -> Tuple[Tuple[int, int], ...]:
    """(start, size) pairs covering ``range(count)`` in chunks"""
    return tuple((start, min(chunk, count - start)) for start in range(0, count, chunk))
