"""Self-describing binary array files and run manifests.

Layout of an ``.arr`` file (all integers little-endian):

    bytes 0..7    magic b"ELARRAY\\n"
    uint32        format version (1)
    uint32        dtype code (0 = float64, 1 = complex128)
    uint32        ndim
    uint64[ndim]  dims
    payload       raw row-major little-endian values
"""

from __future__ import annotations

import hashlib
import json
import struct
import time
from pathlib import Path

import numpy as np

MAGIC = b"ELARRAY\n"
VERSION = 1
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<c16")}
_CODES = {np.dtype("float64"): 0, np.dtype("complex128"): 1}


def write_array(path, arr):
    arr = np.ascontiguousarray(arr)
    if arr.dtype not in _CODES:
        arr = arr.astype(np.complex128 if np.iscomplexobj(arr) else np.float64)
    code = _CODES[arr.dtype]
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", VERSION, code, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        fh.write(arr.astype(_DTYPES[code], copy=False).tobytes())
    return path


def read_array(path):
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise OSError(f"{path}: not an ELARRAY file (bad magic {magic!r})")
        version, code, ndim = struct.unpack("<III", fh.read(12))
        if version != VERSION:
            raise OSError(f"{path}: unsupported format version {version}")
        shape = struct.unpack(f"<{ndim}Q", fh.read(8 * ndim))
        data = np.frombuffer(fh.read(), dtype=_DTYPES[code])
    return data.reshape(shape).copy()


def config_hash(mapping) -> str:
    """Stable hash of a nested str->value mapping; key order irrelevant."""
    blob = json.dumps(mapping, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


class RunManifest:
    """Collects run metadata and the list of files a command produced."""

    def __init__(self, command, config_mapping, extras=None):
        self.data = {
            "command": command,
            "config_hash": config_hash(config_mapping),
            "package": "elastosrc 0.1.0",
            "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
            "files": [],
            "timings_s": {},
        }
        if extras:
            self.data.update(extras)

    def add_file(self, path):
        self.data["files"].append(str(path))

    def add_timing(self, name, seconds):
        self.data["timings_s"][name] = round(float(seconds), 3)

    def set(self, key, value):
        self.data[key] = value

    def write(self, path):
        path = Path(path)
        with open(path, "w") as fh:
            json.dump(self.data, fh, indent=2, default=str)
            fh.write("\n")
        return path
