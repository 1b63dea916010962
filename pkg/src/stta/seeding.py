"""Deterministic seed fan-out.

A child seed is the first 8 bytes (little-endian) of
``sha256("<master>/<tag>/<index>")``. Distinct ``(tag, index)`` pairs give
independent streams, so videos and sweep points can be generated or adapted
in any order, or in parallel, with identical results.
"""
from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master: int, tag: str, index: int = 0) -> int:
    digest = hashlib.sha256(f"{int(master)}/{tag}/{int(index)}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def rng_for(master: int, tag: str, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, tag, index))
