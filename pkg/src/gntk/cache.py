"""Binary Gram-matrix cache.

Layout (little endian): 16-byte header ``b"GNTKGRAM"`` + uint32 version + 4 zero bytes,
uint64 matrix size n, 32-byte SHA-256 of the canonical ArchConfig, n*n float64 row-major.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .kernel import ArchConfig, GramMatrix

MAGIC = b"GNTKGRAM"
VERSION = 1
_HEADER = struct.Struct("<8sI4xQ32s")


class CacheMismatch(ValueError):
    pass


def save_gram(path, gm: GramMatrix) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    values = np.ascontiguousarray(gm.values, dtype="<f8")
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, values.shape[0], gm.arch.fingerprint()))
        fh.write(values.tobytes())
    tmp.replace(path)


def load_gram(path, arch: ArchConfig, dataset_name: str = "") -> GramMatrix:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise CacheMismatch("truncated cache header")
    magic, version, n, fp = _HEADER.unpack_from(data)
    if magic != MAGIC or version != VERSION:
        raise CacheMismatch("not a Gram cache file of a supported version")
    if fp != arch.fingerprint():
        raise CacheMismatch("architecture fingerprint mismatch")
    body = data[_HEADER.size:]
    if len(body) != 8 * n * n:
        raise CacheMismatch(f"expected {n}x{n} values, found {len(body) // 8}")
    values = np.frombuffer(body, dtype="<f8").reshape(n, n).astype(np.float64)
    return GramMatrix(values, arch, dataset_name, False)


def cache_path(cache_dir, dataset_hash: str, arch: ArchConfig) -> Path:
    return Path(cache_dir) / f"{dataset_hash[:16]}-{arch.fingerprint().hex()[:16]}.gram"
