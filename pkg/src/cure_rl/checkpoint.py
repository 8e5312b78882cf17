"""Versioned binary checkpoints.

Layout: magic, format version, config hash, named little-endian array
records, then a JSON metadata blob (RNG states, counters, scalars). Loading
parses the whole file before touching any state, so a corrupt or truncated
checkpoint is rejected cleanly.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile

import numpy as np

MAGIC = b"CURERLCK"
VERSION = 1

_DTYPES = {0: "<f4", 1: "<f8", 2: "<i8", 3: "|u1"}
_DTYPE_CODES = {np.dtype(v): k for k, v in _DTYPES.items()}


class CheckpointError(RuntimeError):
    pass


def save(path: str, config_hash: str, arrays: dict, meta: dict):
    """Atomically write a checkpoint (temp file + rename)."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".ckpt.tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<I", VERSION))
            hash_bytes = config_hash.encode()
            f.write(struct.pack("<H", len(hash_bytes)))
            f.write(hash_bytes)
            f.write(struct.pack("<I", len(arrays)))
            for name in sorted(arrays):
                arr = np.asarray(arrays[name])
                code = _DTYPE_CODES.get(arr.dtype)
                if code is None:
                    arr = arr.astype(np.float32)
                    code = _DTYPE_CODES[arr.dtype]
                name_b = name.encode()
                f.write(struct.pack("<H", len(name_b)))
                f.write(name_b)
                f.write(struct.pack("<BB", code, arr.ndim))
                for d in arr.shape:
                    f.write(struct.pack("<I", d))
                f.write(np.ascontiguousarray(arr).tobytes())
            meta_b = json.dumps(meta, sort_keys=True).encode()
            f.write(struct.pack("<Q", len(meta_b)))
            f.write(meta_b)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Reader:
    def __init__(self, blob: bytes, path: str):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError(f"{self.path}: truncated checkpoint")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load(path: str, expected_hash: str | None = None):
    """Read and validate a checkpoint; returns (arrays, meta, config_hash)."""
    with open(path, "rb") as f:
        blob = f.read()
    r = _Reader(blob, path)
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path}: bad magic bytes (not a checkpoint)")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise CheckpointError(f"{path}: format version {version}, expected {VERSION}")
    (hash_len,) = r.unpack("<H")
    file_hash = r.take(hash_len).decode()
    if expected_hash is not None and file_hash != expected_hash:
        raise CheckpointError(
            f"{path}: config hash mismatch (checkpoint {file_hash[:12]}..., "
            f"current config {expected_hash[:12]}...)")
    (n_arrays,) = r.unpack("<I")
    arrays = {}
    for _ in range(n_arrays):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode()
        code, ndim = r.unpack("<BB")
        if code not in _DTYPES:
            raise CheckpointError(f"{path}: unknown dtype code {code} for {name!r}")
        shape = tuple(r.unpack("<I")[0] for _ in range(ndim))
        dtype = np.dtype(_DTYPES[code])
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        arrays[name] = np.frombuffer(r.take(nbytes), dtype=dtype).reshape(shape).copy()
    (meta_len,) = r.unpack("<Q")
    try:
        meta = json.loads(r.take(meta_len).decode())
    except json.JSONDecodeError as e:
        raise CheckpointError(f"{path}: corrupt metadata block: {e}") from e
    if r.pos != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - r.pos} trailing bytes")
    return arrays, meta, file_hash
