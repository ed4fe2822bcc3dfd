"""Deterministic random streams for every stochastic component.

All randomness is produced by the Philox4x64-10 counter-based generator.
Normal variates are obtained from uniforms through the inverse CDF
(``scipy.special.ndtri``), never through rejection sampling, so the number
of raw draws consumed per variate is fixed.  Together these two choices make
every stream a pure function of ``(seed, stream, position)``: any sub-range
of draws can be regenerated independently of chunking or worker count, and
the output is bit-identical across platforms.
"""

from __future__ import annotations

import hashlib

import numpy as np
from numpy.random import Generator, Philox
from scipy.special import ndtri

# Stream identifiers keep unrelated consumers of the same user seed from
# sharing draws.
STREAM_NLGP = 1
STREAM_INFIDELITY = 2
STREAM_RANDOM_SCORES = 3
STREAM_LIME = 4
STREAM_SHAP = 5
STREAM_PERMUTATION = 6
STREAM_CORPUS = 7
STREAM_PROBE = 8

_MASK64 = (1 << 64) - 1

# Generator.random() yields k / 2**53; recentring to (k + 0.5) / 2**53 keeps
# ndtri away from both infinities without a branch.
_HALF_ULP53 = 2.0**-54

# Philox emits four 64-bit words per counter increment and one word is
# consumed per double, so advance() moves in blocks of four doubles.
_DOUBLES_PER_BLOCK = 4


def philox_generator(seed: int, stream: int = 0) -> Generator:
    """A fresh generator on the (seed, stream) keyed Philox stream."""
    key = np.array([seed & _MASK64, stream & _MASK64], dtype=np.uint64)
    return Generator(Philox(key=key))


def sample_uniforms(seed: int, stream: int, start: int, count: int, width: int) -> np.ndarray:
    """Uniforms for samples ``start .. start+count``, each owning ``width`` values.

    Sample ``j`` always occupies the same counter range regardless of how the
    overall range is chunked, so concatenating calls over sub-ranges equals a
    single call over the union.
    """
    if width < 1 or count < 0 or start < 0:
        raise ValueError("start/count must be non-negative and width positive")
    blocks = -(-width // _DOUBLES_PER_BLOCK)
    bit_gen = Philox(key=np.array([seed & _MASK64, stream & _MASK64], dtype=np.uint64))
    bit_gen.advance(start * blocks)
    raw = Generator(bit_gen).random(count * blocks * _DOUBLES_PER_BLOCK)
    return raw.reshape(count, blocks * _DOUBLES_PER_BLOCK)[:, :width]


def sample_normals(seed: int, stream: int, start: int, count: int, width: int) -> np.ndarray:
    """Standard-normal variates with the same substream layout as uniforms."""
    u = sample_uniforms(seed, stream, start, count, width)
    return ndtri(u + _HALF_ULP53)


def derive_seed(*parts: int | str) -> int:
    """Stable 64-bit seed mixed from heterogeneous components.

    Used to give each (run seed, instance index, purpose) combination its own
    independent stream without manual bookkeeping.
    """
    h = hashlib.sha256()
    for part in parts:
        h.update(repr(part).encode())
        h.update(b"\x1f")
    return int.from_bytes(h.digest()[:8], "little")
