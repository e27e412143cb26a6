"""Deterministic seed derivation.

All randomness in an experiment flows from one master seed. Child seeds
are derived from (master, purpose-tag, indices) so that independent units
of work (frames, splits, candidate trainings, ensemble members) can be
generated in any order, or in isolation, and still agree bit-for-bit with
a sequential run.
"""

from __future__ import annotations

import zlib

import numpy as np


def _tag_code(tag: str) -> int:
    # crc32 is stable across platforms and Python versions.
    return zlib.crc32(tag.encode("utf-8"))


def seed_sequence(master_seed: int, tag: str, *indices: int) -> np.random.SeedSequence:
    """SeedSequence for the unit of work named by (tag, indices)."""
    entropy = [int(master_seed) & 0xFFFFFFFF, _tag_code(tag)]
    entropy.extend(int(i) & 0xFFFFFFFF for i in indices)
    return np.random.SeedSequence(entropy)


def derive_rng(master_seed: int, tag: str, *indices: int) -> np.random.Generator:
    """Independent generator for the unit of work named by (tag, indices)."""
    return np.random.default_rng(seed_sequence(master_seed, tag, *indices))


def derive_seed(master_seed: int, tag: str, *indices: int) -> int:
    """Integer seed usable by APIs that take a plain int."""
    return int(seed_sequence(master_seed, tag, *indices).generate_state(1)[0])
