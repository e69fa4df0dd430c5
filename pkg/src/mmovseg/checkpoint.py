"""Named-array checkpoint container.

Layout (little-endian)::

    b"MMOVCKPT" | u32 version | u64 header length | JSON header | payload | u32 crc32

The header lists each array's name, dtype, shape, offset and size within the
payload, plus free-form metadata (stage tag, config hash, iteration, ...). The
CRC covers header and payload.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .config import ValidationError

MAGIC = b"MMOVCKPT"
VERSION = 1


class CheckpointError(ValidationError):
    pass


def save_checkpoint(path: str | Path, arrays: dict[str, np.ndarray], meta: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    index, chunks, offset = [], [], 0
    for name in sorted(arrays):
        a = np.asarray(arrays[name], order="C")  # ascontiguousarray would turn 0-d into (1,)
        a = a.astype(a.dtype.newbyteorder("<"), copy=False)
        raw = a.tobytes()
        index.append({"name": name, "dtype": a.dtype.str, "shape": list(a.shape),
                      "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps({"meta": meta, "arrays": index, "payload_len": offset}, sort_keys=True).encode()
    payload = b"".join(chunks)
    crc = zlib.crc32(payload, zlib.crc32(header))
    with path.open("wb") as fh:
        fh.write(MAGIC + struct.pack("<IQ", VERSION, len(header)))
        fh.write(header)
        fh.write(payload)
        fh.write(struct.pack("<I", crc))
    return path


def load_checkpoint(path: str | Path, expected_hash: str | None = None,
                    override: bool = False) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint not found: {path}") from None
    if len(blob) < len(MAGIC) + 12 or not blob.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack_from("<IQ", blob, len(MAGIC))
    if version != VERSION:
        raise CheckpointError(f"{path}: checkpoint version {version}, expected {VERSION}")
    start = len(MAGIC) + 12
    header_raw = blob[start:start + hlen]
    try:
        header = json.loads(header_raw)
        payload_len = header["payload_len"]
    except (json.JSONDecodeError, UnicodeDecodeError, KeyError, TypeError):
        raise CheckpointError(f"{path}: corrupted header (checksum/length)") from None
    body_end = start + hlen + payload_len
    if len(blob) != body_end + 4:
        raise CheckpointError(f"{path}: length mismatch, file truncated or padded (checksum error)")
    payload = blob[start + hlen:body_end]
    (crc,) = struct.unpack_from("<I", blob, body_end)
    if zlib.crc32(payload, zlib.crc32(header_raw)) != crc:
        raise CheckpointError(f"{path}: checksum mismatch")
    meta = header["meta"]
    if expected_hash is not None and meta.get("config_hash") != expected_hash and not override:
        raise CheckpointError(
            f"{path}: config hash {meta.get('config_hash')} does not match {expected_hash}"
        )
    arrays = {}
    for item in header["arrays"]:
        raw = payload[item["offset"]:item["offset"] + item["nbytes"]]
        arrays[item["name"]] = np.frombuffer(raw, dtype=np.dtype(item["dtype"])).reshape(item["shape"]).copy()
    return arrays, meta
