"""Video loading and synthesis.

Every loader returns a uint8 volume of shape (frames, height, width,
channels).  Pixels stay in the source color layout (Y or YUV); no color
transforms happen here.  Chroma-subsampled inputs are brought to full
resolution by nearest-neighbour duplication so downstream sampling sees
one uniform pixel grid, with luma passed through byte-exact.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import blobio


class VideoFormatError(ValueError):
    """Malformed, truncated, or unsupported video input."""


@dataclass(frozen=True, eq=False)
class VideoVolume:
    """A fully decoded video: ``data`` is (frames, height, width, channels) uint8."""

    data: np.ndarray
    fps: Fraction = Fraction(30)

    def __post_init__(self):
        d = self.data
        if not isinstance(d, np.ndarray) or d.ndim != 4:
            raise VideoFormatError("video data must be a 4-d (t, h, w, c) array")
        if d.dtype != np.uint8:
            raise VideoFormatError(f"video data must be uint8, got {d.dtype}")
        if min(d.shape) == 0:
            raise VideoFormatError(f"video has a zero dimension: {d.shape}")
        d.flags.writeable = False  # volumes are read-only; all ops copy

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return self.data.shape


# colorspace tags treated as plain 4:2:0 (siting differences do not matter
# for nearest duplication)
_Y4M_420 = {"420", "420jpeg", "420mpeg2", "420paldv"}


def _parse_y4m_header(line: bytes, path) -> tuple[int, int, Fraction, str]:
    fields = line.decode("ascii", errors="replace").split(" ")
    if not fields or fields[0] != "YUV4MPEG2":
        raise VideoFormatError(f"{path}: missing YUV4MPEG2 signature")
    width = height = 0
    fps = Fraction(30, 1)
    colorspace = "420"
    for token in fields[1:]:
        if not token:
            continue
        key, value = token[0], token[1:]
        try:
            if key == "W":
                width = int(value)
            elif key == "H":
                height = int(value)
            elif key == "F":
                num, den = value.split(":")
                fps = Fraction(int(num), int(den))
            elif key == "C":
                colorspace = value
        except (ValueError, ZeroDivisionError) as exc:
            raise VideoFormatError(f"{path}: bad header token {token!r}") from exc
    if width <= 0 or height <= 0:
        raise VideoFormatError(f"{path}: header lacks positive W and H")
    return width, height, fps, colorspace


def load_y4m(path) -> VideoVolume:
    """Decode a YUV4MPEG2 stream (4:2:0, 4:4:4, or mono)."""
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise VideoFormatError(f"{path}: no stream header")
    width, height, fps, colorspace = _parse_y4m_header(raw[:nl], path)

    luma = width * height
    if colorspace in _Y4M_420:
        if width % 2 or height % 2:
            raise VideoFormatError(
                f"{path}: 4:2:0 requires even dimensions, got {width}x{height}"
            )
        chroma = (width // 2) * (height // 2)
        frame_bytes = luma + 2 * chroma
    elif colorspace == "444":
        frame_bytes = 3 * luma
    elif colorspace == "mono":
        frame_bytes = luma
    else:
        raise VideoFormatError(f"{path}: unsupported colorspace C{colorspace}")

    frames = []
    pos = nl + 1
    while pos < len(raw):
        marker_end = raw.find(b"\n", pos)
        if marker_end < 0 or not raw[pos:marker_end].startswith(b"FRAME"):
            raise VideoFormatError(f"{path}: expected FRAME marker at byte {pos}")
        payload = raw[marker_end + 1 : marker_end + 1 + frame_bytes]
        if len(payload) < frame_bytes:
            raise VideoFormatError(
                f"{path}: frame {len(frames)} truncated "
                f"({len(payload)} of {frame_bytes} bytes)"
            )
        frames.append(_decode_y4m_frame(payload, width, height, colorspace))
        pos = marker_end + 1 + frame_bytes
    if not frames:
        raise VideoFormatError(f"{path}: stream has no frames")
    return VideoVolume(data=np.stack(frames), fps=fps)


def _decode_y4m_frame(payload: bytes, width: int, height: int, colorspace: str) -> np.ndarray:
    luma = width * height
    y = np.frombuffer(payload, np.uint8, luma).reshape(height, width)
    if colorspace == "mono":
        return y[:, :, None]
    if colorspace == "444":
        u = np.frombuffer(payload, np.uint8, luma, offset=luma).reshape(height, width)
        v = np.frombuffer(payload, np.uint8, luma, offset=2 * luma).reshape(height, width)
        return np.stack([y, u, v], axis=-1)
    half = (width // 2) * (height // 2)
    u = np.frombuffer(payload, np.uint8, half, offset=luma)
    v = np.frombuffer(payload, np.uint8, half, offset=luma + half)
    u = u.reshape(height // 2, width // 2).repeat(2, axis=0).repeat(2, axis=1)
    v = v.reshape(height // 2, width // 2).repeat(2, axis=0).repeat(2, axis=1)
    return np.stack([y, u, v], axis=-1)


def write_y4m(volume: VideoVolume, path) -> None:
    """Write a volume as YUV4MPEG2 (mono for 1 channel, 4:4:4 for 3).

    Both layouts round-trip losslessly through :func:`load_y4m`.
    """
    t, h, w, c = volume.data.shape
    if c == 1:
        tag = "mono"
    elif c == 3:
        tag = "444"
    else:
        raise VideoFormatError(f"cannot encode {c}-channel video as y4m")
    fps = volume.fps
    head = f"YUV4MPEG2 W{w} H{h} F{fps.numerator}:{fps.denominator} Ip A1:1 C{tag}\n"
    parts = [head.encode("ascii")]
    for frame in volume.data:
        parts.append(b"FRAME\n")
        for ch in range(c):
            parts.append(frame[:, :, ch].tobytes())
    blobio.atomic_write_bytes(path, b"".join(parts))


def load_raw(path, meta=None) -> VideoVolume:
    """Load a raw uint8 blob described by a JSON sidecar.

    ``meta`` may be a descriptor dict or a path to one; by default the
    sidecar is expected at ``<path>.json``.
    """
    if meta is None:
        meta = os.fspath(path) + ".json"
    if not isinstance(meta, dict):
        meta = blobio.read_json(meta)
    try:
        dims = (int(meta["t"]), int(meta["h"]), int(meta["w"]), int(meta["c"]))
        dtype = meta["dtype"]
        endian = meta["endianness"]
    except KeyError as exc:
        raise VideoFormatError(f"{path}: sidecar missing field {exc}") from exc
    if dtype != "u8":
        raise VideoFormatError(f"{path}: unsupported sample dtype {dtype!r} (only u8)")
    if endian != "le":
        raise VideoFormatError(f"{path}: unsupported endianness {endian!r}")
    if dims[3] not in (1, 3):
        raise VideoFormatError(
            f"{path}: unsupported layout with {dims[3]} channels (1 or 3)"
        )
    if min(dims) <= 0:
        raise VideoFormatError(f"{path}: sidecar declares empty dims {dims}")
    payload = Path(path).read_bytes()
    expected = dims[0] * dims[1] * dims[2] * dims[3]
    if len(payload) != expected:
        raise VideoFormatError(
            f"{path}: sidecar declares {dims[0]} frames of {dims[1]}x{dims[2]}x{dims[3]} "
            f"({expected} bytes) but file holds {len(payload)} bytes"
        )
    data = np.frombuffer(payload, np.uint8).reshape(dims).copy()
    return VideoVolume(data=data)


def write_raw(volume: VideoVolume, path) -> None:
    """Write blob + sidecar; inverse of :func:`load_raw`."""
    t, h, w, c = volume.data.shape
    blobio.atomic_write_bytes(path, blobio.tensor_bytes(volume.data))
    blobio.atomic_write_json(
        os.fspath(path) + ".json",
        {"t": t, "h": h, "w": w, "c": c, "dtype": "u8", "endianness": "le"},
    )


def gradient_value(dims, t, y, x):
    """Pixel value of the ``gradient`` pattern at (t, y, x); vectorized.

    The pattern encodes the source coordinate into the byte value, which
    is what makes sampled pixels traceable back to where they came from.
    """
    _, h, w, _ = dims
    return ((np.asarray(t) * h + np.asarray(y)) * w + np.asarray(x)) % 256


def synth_video(pattern: str, dims, seed: int | None = None) -> VideoVolume:
    """Deterministic synthetic volume: ``checker``, ``gradient``, or ``noise``."""
    t, h, w, c = dims
    if min(dims) <= 0:
        raise VideoFormatError(f"synth dims must be positive, got {dims}")
    if pattern == "gradient":
        plane = gradient_value(
            dims,
            np.arange(t)[:, None, None],
            np.arange(h)[None, :, None],
            np.arange(w)[None, None, :],
        ).astype(np.uint8)
        data = np.broadcast_to(plane[..., None], (t, h, w, c)).copy()
    elif pattern == "checker":
        parity = (
            np.arange(t)[:, None, None]
            + np.arange(h)[None, :, None]
            + np.arange(w)[None, None, :]
        ) % 2
        data = np.broadcast_to((parity * 255).astype(np.uint8)[..., None], (t, h, w, c)).copy()
    elif pattern == "noise":
        rng = np.random.default_rng(seed)
        data = rng.integers(0, 256, size=(t, h, w, c), dtype=np.uint8)
    else:
        raise VideoFormatError(f"unknown synth pattern {pattern!r}")
    return VideoVolume(data=data)
