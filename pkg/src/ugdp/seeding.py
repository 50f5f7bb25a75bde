"""Counter-based seed derivation.

A master seed plus a path of names (``("vae", 3)``, ``("scan", "rf", "synthetic_2")``)
is hashed with SHA-256; the first 8 bytes of the digest, read little-endian,
form the derived 64-bit seed.  Derivation is order-sensitive and independent
of how many other streams were drawn, so stages can run in any order or in
parallel and still see the same randomness.
"""
from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master: int, *path) -> int:
    key = "/".join([str(int(master))] + [str(p) for p in path]).encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little")


def rng(master: int, *path) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(master, *path)))
