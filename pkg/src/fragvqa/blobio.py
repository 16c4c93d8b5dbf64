"""Raw little-endian tensor blobs with JSON sidecars.

The interchange convention used across the toolkit: a tensor is stored
as its contiguous little-endian bytes, and every blob travels with a
JSON descriptor (either a sidecar file or a manifest entry) giving
shape and dtype.  Writes go through a temp file and an atomic rename so
partially written outputs are never observed.
"""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np

# dtype codes used in sidecars and manifests
DTYPE_CODES = {
    "u8": np.dtype("<u1"),
    "f4": np.dtype("<f4"),
    "f8": np.dtype("<f8"),
}


def dtype_code(dtype: np.dtype) -> str:
    for code, dt in DTYPE_CODES.items():
        if dt == np.dtype(dtype).newbyteorder("<"):
            return code
    raise ValueError(f"no blob code for dtype {dtype}")


def tensor_bytes(arr: np.ndarray) -> bytes:
    """Contiguous little-endian bytes of ``arr``."""
    return np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()


def tensor_from_bytes(payload: bytes, shape, code: str) -> np.ndarray:
    if code not in DTYPE_CODES:
        raise ValueError(f"unsupported blob dtype {code!r}")
    dt = DTYPE_CODES[code]
    expected = int(np.prod(shape)) * dt.itemsize
    if len(payload) != expected:
        raise ValueError(
            f"blob holds {len(payload)} bytes, descriptor implies {expected}"
        )
    return np.frombuffer(payload, dtype=dt).reshape(shape)


def atomic_write_bytes(path, payload: bytes) -> None:
    path = os.fspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_json(path, obj) -> None:
    atomic_write_bytes(path, (json.dumps(obj, sort_keys=True) + "\n").encode("ascii"))


def read_json(path):
    with open(path, "rb") as fh:
        return json.loads(fh.read().decode("utf-8"))
