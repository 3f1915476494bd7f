"""Named, counter-based random streams.

Every stochastic step draws from a Philox generator whose key is a hash of
``(seed, *names)``, so a stream depends only on what it is for and never on
how many draws other streams made or which worker ran first.
"""
import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def stream_key(seed, *names):
    """128-bit Philox key for the stream ``(seed, *names)``."""
    text = "\x1f".join([str(int(seed))] + [str(n) for n in names])
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=16).digest()
    return int.from_bytes(digest, "little")


def stream(seed, *names):
    return np.random.Generator(np.random.Philox(key=stream_key(seed, *names)))


def stream_u64(seed, *names):
    """A single 64-bit integer identifying a stream, for in-kernel hashing."""
    return stream_key(seed, *names) & MASK64


def splitmix64(x):
    """Pure-Python splitmix64 finalizer; mirrors the jitted kernel version."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)
