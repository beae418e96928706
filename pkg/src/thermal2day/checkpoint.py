"""Single-file tensor archive with a versioned header.

File layout (all integers little-endian):

    bytes 0..3    magic b"T2DC"
    bytes 4..7    format version, uint32 (currently 1)
    bytes 8..15   header length N, uint64
    bytes 16..16+N    UTF-8 JSON header
    remainder     concatenated raw tensor payloads

The JSON header is {"meta": {...}, "tensors": [{"key", "dtype", "shape",
"offset", "nbytes"}, ...]} where offsets are relative to the payload start
and dtype strings are little-endian numpy codes (model parameters are
"<f4"; counters may be "<i8", RNG bytes "|u1"). Reload is bit-exact.
"""

import json
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"T2DC"
VERSION = 1
_ALLOWED_DTYPES = ("<f4", "<f8", "<i8", "<i4", "|u1", "|b1")


def _normalize(array):
    arr = np.ascontiguousarray(array)
    code = arr.dtype.str
    if code.startswith(">"):  # force little-endian payloads
        arr = arr.astype(arr.dtype.newbyteorder("<"))
        code = arr.dtype.str
    if code not in _ALLOWED_DTYPES:
        raise CheckpointError(f"unsupported tensor dtype {code}")
    return arr, code


def save_archive(path, tensors, meta):
    """Write named arrays plus a JSON-serializable meta dict to path."""
    entries = []
    payloads = []
    offset = 0
    for key, array in tensors.items():
        arr, code = _normalize(array)
        data = arr.tobytes()
        entries.append(
            {
                "key": key,
                "dtype": code,
                "shape": list(arr.shape),
                "offset": offset,
                "nbytes": len(data),
            }
        )
        payloads.append(data)
        offset += len(data)
    header = json.dumps({"meta": meta, "tensors": entries}).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.uint32(VERSION).tobytes())
        fh.write(np.uint64(len(header)).tobytes())
        fh.write(header)
        for data in payloads:
            fh.write(data)


def load_archive(path):
    """Read an archive back into ({key: array}, meta). Bit-exact."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(blob) < 16:
        raise CheckpointError(f"truncated checkpoint {path}")
    if blob[:4] != MAGIC:
        raise CheckpointError(f"bad magic in {path}: not a checkpoint file")
    version = int(np.frombuffer(blob[4:8], dtype="<u4")[0])
    if version != VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {version} (expected {VERSION})"
        )
    header_len = int(np.frombuffer(blob[8:16], dtype="<u8")[0])
    if len(blob) < 16 + header_len:
        raise CheckpointError(f"truncated checkpoint header in {path}")
    try:
        header = json.loads(blob[16 : 16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header in {path}: {exc}") from exc
    payload = blob[16 + header_len :]
    tensors = {}
    for entry in header["tensors"]:
        start, nbytes = entry["offset"], entry["nbytes"]
        if start + nbytes > len(payload):
            raise CheckpointError(f"truncated checkpoint payload in {path}")
        arr = np.frombuffer(payload[start : start + nbytes], dtype=entry["dtype"])
        tensors[entry["key"]] = arr.reshape(entry["shape"]).copy()
    return tensors, header["meta"]
