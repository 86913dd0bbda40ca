"""Counter-based random streams keyed by (master_seed, identity, sample).

Every random draw in the generator is made from a stream derived purely
from integer keys, never from shared mutable state. Streams for different
keys are statistically independent, so identities (and samples within an
identity) can be produced in any order, on any worker, with identical
results.

Philox is counter-based and cheap to key; SeedSequence gives a stable,
platform-independent mapping from integer tuples to Philox keys.
"""

from __future__ import annotations

import numpy as np

# Stream-domain tags keep identity-level and sample-level streams disjoint
# even when a sample id collides numerically with an identity id.
_IDENTITY_TAG = 0x1D
_SAMPLE_TAG = 0x5A


def _stream(*key: int) -> np.random.Generator:
    seq = np.random.SeedSequence(key)
    return np.random.Generator(np.random.Philox(seq))


def identity_stream(master_seed: int, identity_id: int) -> np.random.Generator:
    """Stream that owns all between-identity randomness of one identity."""
    if identity_id < 0:
        raise ValueError(f"identity_id must be >= 0, got {identity_id}")
    return _stream(master_seed, _IDENTITY_TAG, identity_id)


def sample_stream(master_seed: int, identity_id: int, sample_id: int) -> np.random.Generator:
    """Stream that owns all within-identity randomness of one sample."""
    if identity_id < 0 or sample_id < 0:
        raise ValueError(f"ids must be >= 0, got ({identity_id}, {sample_id})")
    return _stream(master_seed, _SAMPLE_TAG, identity_id, sample_id)
