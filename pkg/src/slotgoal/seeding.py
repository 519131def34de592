"""Stable seed derivation: every random stream is keyed by (root seed, purpose)."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(root: int, *purpose) -> int:
    key = "/".join([str(int(root))] + [str(p) for p in purpose])
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "little")


def rng_for(root: int, *purpose) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, *purpose))
