"""Counter-based random streams.

Every draw is a pure function of ``(seed, stream, slot)``, so items can be
generated in any order or in parallel and still come out bit-identical.
Streams are 64-bit ids; ``stream_ids`` packs a namespace into the top 16 bits.
"""

import numpy as np

from .kernels import counter_uniforms

_NS_SHIFT = 48


def stream_ids(namespace: int, start: int, count: int) -> np.ndarray:
    idx = np.arange(start, start + count, dtype=np.uint64)
    return idx | np.uint64(namespace << _NS_SHIFT)


def uniforms(seed: int, streams: np.ndarray, n_slots: int) -> np.ndarray:
    """(len(streams), n_slots) array of uniforms in the open interval (0, 1)."""
    return counter_uniforms(int(seed), np.ascontiguousarray(streams, dtype=np.uint64), int(n_slots))


def box_muller(u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def categorical(u: np.ndarray, probs) -> np.ndarray:
    cum = np.cumsum(np.asarray(probs, dtype=float))
    return np.minimum(np.searchsorted(cum, u, side="right"), len(cum) - 1)


def permutation(seed: int, namespace: int, n: int) -> np.ndarray:
    """Deterministic permutation of ``range(n)`` (sort by per-index keys)."""
    keys = uniforms(seed, stream_ids(namespace, 0, n), 1)[:, 0]
    return np.argsort(keys, kind="stable")
