"""Reproducible random-number plumbing.

Every stochastic routine in this package draws from one of two sources:

* a stream-level ``numpy.random.Generator`` backed by PCG64, seeded with a
  64-bit key derived from ``(master seed, labels..., replicate index)``;
* per-event mark substreams, evaluated as a counter-based SplitMix64
  sequence so that the j-th uniform of event i is a pure function of
  ``(stream key, i, j)`` and can be recomputed (and vectorised) without
  constructing generator objects.

The derivation chain is fixed: string labels are hashed with FNV-1a,
integers are folded in with the SplitMix64 finaliser.  Identical
``(seed, labels)`` always produce identical draws, independently of
scheduling or of how many other streams were consumed.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15  # golden-ratio increment of SplitMix64
_MULT1 = 0xBF58476D1CE4E5B9
_MULT2 = 0x94D049BB133111EB
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_INV_2_64 = 2.0**-64


def mix64(x: int) -> int:
    """SplitMix64 finaliser: avalanche a 64-bit integer."""
    x &= _MASK
    x = ((x ^ (x >> 30)) * _MULT1) & _MASK
    x = ((x ^ (x >> 27)) * _MULT2) & _MASK
    return x ^ (x >> 31)


def fnv1a64(label: str) -> int:
    """FNV-1a hash of a text label (stable across runs and platforms)."""
    h = _FNV_OFFSET
    for byte in label.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & _MASK
    return h


def derive_key(master: int, *parts: int | str) -> int:
    """Derive a 64-bit stream key from a master seed and labels.

    ``parts`` may mix strings (hashed with FNV-1a) and integers (e.g.
    replicate indices).  The chain is order-sensitive.
    """
    h = mix64(master)
    for p in parts:
        if isinstance(p, str):
            p = fnv1a64(p)
        h = mix64(h ^ mix64((p + _GAMMA) & _MASK))
    return h


def make_generator(key: int) -> np.random.Generator:
    """PCG64 generator for a derived stream key."""
    return np.random.Generator(np.random.PCG64(key & _MASK))


def event_keys(stream_key: int, count: int) -> np.ndarray:
    """Substream keys for events 0..count-1 of a stream (uint64 array)."""
    idx = np.arange(1, count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix64_vec(np.uint64(stream_key) + idx * np.uint64(_GAMMA))


def event_uniform(key: int, j: int) -> float:
    """The j-th uniform in [0,1) of the substream with the given key."""
    return mix64((key + (j + 1) * _GAMMA) & _MASK) * _INV_2_64


def event_uniforms(key: int, count: int, offset: int = 0) -> np.ndarray:
    """Uniforms j = offset..offset+count-1 of one event substream."""
    j = np.arange(offset + 1, offset + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        out = _mix64_vec(np.uint64(key) + j * np.uint64(_GAMMA))
    return out * _INV_2_64


def event_uniforms_at(keys: np.ndarray, j: int) -> np.ndarray:
    """The j-th uniform of many event substreams at once."""
    with np.errstate(over="ignore"):
        out = _mix64_vec(keys.astype(np.uint64) + np.uint64((j + 1) * _GAMMA & _MASK))
    return out * _INV_2_64


def _mix64_vec(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        x = (x ^ (x >> np.uint64(30))) * np.uint64(_MULT1)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(_MULT2)
        return x ^ (x >> np.uint64(31))
