"""Seeded, splittable random generators.

All stochastic code receives a ``numpy.random.Generator`` explicitly.  The
bit generator is named in configuration; ``philox`` (counter-based) is the
default and the only one that ``derive`` guarantees stable child streams for.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError

BIT_GENERATORS = {
    "philox": np.random.Philox,
    "pcg64": np.random.PCG64,
}


def make_rng(seed: int, *path: int, name: str = "philox") -> np.random.Generator:
    """Generator for ``seed``; ``path`` selects an independent child stream."""
    try:
        bit_generator = BIT_GENERATORS[name]
    except KeyError:
        raise ConfigError(f"unknown generator {name!r}; choose from {sorted(BIT_GENERATORS)}") from None
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(bit_generator(seq))


def derive_seed(seed: int, *path: int) -> int:
    """A 63-bit integer seed for a child job, stable across processes."""
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    hi, lo = (int(v) for v in seq.generate_state(2, dtype=np.uint32))
    return ((hi & 0x7FFFFFFF) << 32) | lo
