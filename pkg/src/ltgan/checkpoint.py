"""Binary checkpoint container.

Layout: magic "LTGN", u32 version, u32-length-prefixed canonical config
text, u32 record count, per-tensor records (u16 name length + name, u8
rank, u64 dims, little-endian float32 data), then an 8-byte blake2b
checksum of everything before it. Records are written in sorted name
order so save(load(x)) is byte-identical.
"""

from __future__ import annotations

import hashlib
import io
import os
import struct
import tempfile

import numpy as np

MAGIC = b"LTGN"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


def write_payload(path: str, config_text: str, tensors: dict[str, np.ndarray]) -> None:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    conf = config_text.encode("utf-8")
    buf.write(struct.pack("<I", len(conf)))
    buf.write(conf)
    buf.write(struct.pack("<I", len(tensors)))
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        raw_name = name.encode("utf-8")
        buf.write(struct.pack("<H", len(raw_name)))
        buf.write(raw_name)
        buf.write(struct.pack("<B", arr.ndim))
        for dim in arr.shape:
            buf.write(struct.pack("<Q", dim))
        buf.write(arr.tobytes())
    body = buf.getvalue()
    digest = hashlib.blake2b(body, digest_size=8).digest()
    _atomic_write(path, body + digest)


def read_payload(path: str) -> tuple[str, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    body, digest = raw[:-8], raw[-8:]
    if hashlib.blake2b(body, digest_size=8).digest() != digest:
        raise CheckpointError(f"{path}: checksum mismatch (corrupted file)")
    off = 4
    (version,) = struct.unpack_from("<I", body, off)
    off += 4
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    (clen,) = struct.unpack_from("<I", body, off)
    off += 4
    if off + clen > len(body):
        raise CheckpointError(f"{path}: truncated config block")
    config_text = body[off:off + clen].decode("utf-8")
    off += clen
    (count,) = struct.unpack_from("<I", body, off)
    off += 4
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        try:
            (nlen,) = struct.unpack_from("<H", body, off)
            off += 2
            name = body[off:off + nlen].decode("utf-8")
            off += nlen
            (rank,) = struct.unpack_from("<B", body, off)
            off += 1
            dims = struct.unpack_from(f"<{rank}Q", body, off)
            off += 8 * rank
            n = int(np.prod(dims)) if rank else 1
            data = np.frombuffer(body, "<f4", n, off).reshape(dims).copy()
            off += 4 * n
        except (struct.error, ValueError) as exc:
            raise CheckpointError(f"{path}: truncated tensor records ({exc})") from exc
        tensors[name] = data
    if off != len(body):
        raise CheckpointError(f"{path}: {len(body) - off} trailing bytes after records")
    return config_text, tensors


def _atomic_write(path: str, data: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ckpt-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str, text: str) -> None:
    _atomic_write(path, text.encode("utf-8"))
