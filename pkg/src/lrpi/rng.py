"""Counter-based random streams.

Every random quantity in the package is addressed by a *key* (derived from the
user seed plus a tuple of integer labels) and a *row* index.  Row ``b`` of a
stream occupies a fixed block of Philox counters, so any row can be regenerated
on its own, and a block of rows drawn in one call is bit-identical to the same
rows drawn one at a time.  Work split across processes therefore cannot change
results.
"""

import numpy as np

_WORDS_PER_COUNTER = 4
_U53 = 2.0**-53


def stream_key(seed, *labels):
    """128-bit Philox key for ``seed`` and a tuple of non-negative integer labels."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    words = np.random.SeedSequence(entropy, spawn_key=tuple(int(v) for v in labels))
    lo, hi = words.generate_state(2, np.uint64)
    return int(lo) | (int(hi) << 64)


def _counters_per_row(width):
    return -(-int(width) // _WORDS_PER_COUNTER)


def uniforms(key, start, rows, width):
    """Open-interval uniforms of shape ``(rows, width)`` for rows ``start .. start+rows-1``.

    Values lie strictly inside (0, 1), so inverse-cdf transforms never hit
    an infinite endpoint.
    """
    per_row = _counters_per_row(width)
    bitgen = np.random.Philox(key=key, counter=[int(start) * per_row, 0, 0, 0])
    raw = bitgen.random_raw(int(rows) * per_row * _WORDS_PER_COUNTER)
    raw = raw.reshape(int(rows), per_row * _WORDS_PER_COUNTER)[:, : int(width)]
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _U53


def generator(seed, *labels):
    """A numpy ``Generator`` on its own Philox stream (for non-inverse-cdf draws)."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, *labels)))
