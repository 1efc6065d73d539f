"""Deterministic seed derivation.

Every source of randomness in the pipeline draws from a numpy Generator
seeded through :func:`derive_seed`, a SplitMix64 chain over the parent seed
and a sequence of integer/string tags. The scheme is stable across runs and
platforms, so a (master_seed, tags...) pair fully identifies a stream.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One SplitMix64 output step for a 64-bit state."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def _tag_words(tag: int | str) -> list[int]:
    if isinstance(tag, (int, np.integer)):
        return [int(tag) & _MASK]
    if isinstance(tag, str):
        raw = tag.encode("utf-8")
        words = [
            int.from_bytes(raw[i : i + 8], "little") for i in range(0, len(raw), 8)
        ]
        words.append(len(raw))  # length word separates "ab","c" from "a","bc"
        return words
    raise TypeError(f"unsupported seed tag type: {type(tag)!r}")


def derive_seed(seed: int, *tags: int | str) -> int:
    """Derive a 64-bit child seed from ``seed`` and an ordered tag list."""
    x = int(seed) & _MASK
    if not tags:
        return splitmix64(x)
    for tag in tags:
        for word in _tag_words(tag):
            x = splitmix64(x ^ word)
    return x


def rng_from(seed: int, *tags: int | str) -> np.random.Generator:
    """numpy Generator seeded by :func:`derive_seed`."""
    return np.random.default_rng(derive_seed(seed, *tags))
