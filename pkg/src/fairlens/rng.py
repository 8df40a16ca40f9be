"""Seed splitting.

Every random choice in a campaign descends from one master seed.  A sub-seed
is the first eight bytes (little endian) of ``blake2b`` over the text
``"{master}/{phase}/{trial}"``, so any language with blake2b reproduces the
stream structure.
"""
from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def derive_seed(master: int, phase: str, trial: int = 0) -> int:
    """64-bit sub-seed for ``(phase, trial)`` under ``master``."""
    text = f"{int(master) & MASK64}/{phase}/{int(trial)}".encode("utf-8")
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little")


def generator(master: int, phase: str, trial: int = 0) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, phase, trial))


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator keyed by integers, used for per-item streams."""
    return np.random.default_rng([int(seed) & MASK64, *(int(k) for k in keys)])
