"""Spatial-temporal grid mini-cube sampling.

A video is partitioned into ``temporal_segments`` uniform segments and a
``spatial_grids`` x ``spatial_grids`` uniform spatial grid.  From every
(segment, row, col) region one small continuous cube of raw pixels is
sampled, and the cubes are spliced back together in grid order into a
single dense tensor, the fragment.  Local texture inside each cube is
untouched (quality-sensitive), while the splice preserves the global
layout at a fraction of the original pixel count.

Determinism contract: the fragment is a pure function of
(video, config, seed).  Offset draws consume the generator in a fixed
order: all temporal offsets in segment order first, then spatial
offsets in (segment, row, col) row-major order, drawing the vertical
offset before the horizontal one.  ``alignment="per_clip"`` draws one
spatial offset per (row, col) during the first segment sweep and reuses
it for all later segments.  ``offset_policy="centered"`` takes floored
midpoints and consumes no draws.

``temporal_policy="dense"`` covers the classic dense variant: a single
continuous run of ``temporal_segments * frames_per_cube`` frames is
placed uniformly at random (one draw), and each segment's cube is the
corresponding slice of that run.  The stored per-segment frame offsets
are then relative to the regular segment starts and may step outside
their segment; everything else behaves identically.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields

import numpy as np

from . import blobio
from .video import VideoVolume


class GeometryError(ValueError):
    """Sampling geometry that cannot fit the given video."""


ALIGNMENTS = ("per_cube", "per_clip")
OFFSET_POLICIES = ("random", "centered")
TEMPORAL_POLICIES = ("segmented", "dense")


@dataclass(frozen=True)
class SamplingConfig:
    """Full description of one sampling run."""

    temporal_segments: int
    spatial_grids: int
    frames_per_cube: int
    patch_side: int
    seed: int = 0
    alignment: str = "per_cube"
    offset_policy: str = "random"
    temporal_policy: str = "segmented"

    def __post_init__(self):
        for name in ("temporal_segments", "spatial_grids", "frames_per_cube", "patch_side"):
            if int(getattr(self, name)) < 1:
                raise GeometryError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.alignment not in ALIGNMENTS:
            raise GeometryError(f"alignment must be one of {ALIGNMENTS}")
        if self.offset_policy not in OFFSET_POLICIES:
            raise GeometryError(f"offset_policy must be one of {OFFSET_POLICIES}")
        if self.temporal_policy not in TEMPORAL_POLICIES:
            raise GeometryError(f"temporal_policy must be one of {TEMPORAL_POLICIES}")

    @property
    def fragment_frames(self) -> int:
        return self.temporal_segments * self.frames_per_cube

    @property
    def fragment_side(self) -> int:
        return self.spatial_grids * self.patch_side

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, mapping: dict) -> "SamplingConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(mapping) - known
        if unknown:
            raise GeometryError(f"unknown config fields: {sorted(unknown)}")
        return cls(**mapping)


# Geometry presets from the published variants.  The dense presets take one
# continuous frame run with spatially aligned patches; the others sample a
# cube per temporal segment.
PRESETS = {
    "faster-vqa": SamplingConfig(8, 7, 4, 32),
    "faster-vqa-mt": SamplingConfig(4, 7, 4, 32),
    "faster-vqa-ms": SamplingConfig(8, 5, 4, 32),
    "fast-vqa": SamplingConfig(8, 7, 4, 32, alignment="per_clip", temporal_policy="dense"),
    "fast-vqa-m": SamplingConfig(4, 4, 4, 32, alignment="per_clip", temporal_policy="dense"),
}


@dataclass(frozen=True)
class GridPartition:
    """Half-open [start, end) bounds of segments, grid rows, and grid cols."""

    temporal: tuple[tuple[int, int], ...]
    rows: tuple[tuple[int, int], ...]
    cols: tuple[tuple[int, int], ...]


def _axis_bounds(extent: int, bins: int) -> tuple[tuple[int, int], ...]:
    # boundary i sits at floor(i * extent / bins); exact cover, no overlap
    cuts = [extent * i // bins for i in range(bins + 1)]
    return tuple((cuts[i], cuts[i + 1]) for i in range(bins))


def partition_grids(config: SamplingConfig, dims) -> GridPartition:
    """Partition a (frames, height, width) extent; errors name the offending axis."""
    t, h, w = dims[0], dims[1], dims[2]
    axes = (
        ("temporal", t, config.temporal_segments, config.frames_per_cube),
        ("row", h, config.spatial_grids, config.patch_side),
        ("col", w, config.spatial_grids, config.patch_side),
    )
    bounds = []
    for name, extent, bins, cube in axes:
        if bins > extent:
            raise GeometryError(
                f"{name} axis: {bins} bins cannot partition extent {extent}"
            )
        spans = _axis_bounds(extent, bins)
        for idx, (lo, hi) in enumerate(spans):
            if hi - lo < cube:
                raise GeometryError(
                    f"{name} axis: bin {idx} spans {hi - lo} < cube extent {cube}"
                )
        bounds.append(spans)
    if config.temporal_policy == "dense" and config.fragment_frames > t:
        raise GeometryError(
            f"temporal axis: dense run of {config.fragment_frames} frames "
            f"exceeds video length {t}"
        )
    return GridPartition(temporal=bounds[0], rows=bounds[1], cols=bounds[2])


@dataclass(frozen=True)
class CubeOffset:
    """Placement of one sampled cube.

    (segment, row, col) name the source region; ``frame`` is the start
    frame inside the segment, (``top``, ``left``) the start pixel inside
    the grid cell.  All frames of the cube share (top, left).
    """

    segment: int
    row: int
    col: int
    frame: int
    top: int
    left: int

    def as_list(self) -> list[int]:
        return [self.segment, self.row, self.col, self.frame, self.top, self.left]


def _draw(rng, span: int) -> int:
    # uniform on [0, span] inclusive
    return int(rng.integers(0, span + 1))


def sample_offsets(config: SamplingConfig, partition: GridPartition, rng) -> tuple[CubeOffset, ...]:
    """Draw cube offsets for every (segment, row, col), in contract order."""
    return _sample_offsets(config, partition, rng, forced_run_start=None)


def _sample_offsets(config, partition, rng, forced_run_start) -> tuple[CubeOffset, ...]:
    centered = config.offset_policy == "centered"
    tf, sf = config.frames_per_cube, config.patch_side
    seg_starts = [lo for lo, _ in partition.temporal]

    if config.temporal_policy == "dense":
        total = partition.temporal[-1][1]
        room = total - config.fragment_frames
        if forced_run_start is not None:
            run = forced_run_start
            if not 0 <= run <= room:
                raise GeometryError(f"dense run start {run} outside [0, {room}]")
        else:
            run = room // 2 if centered else _draw(rng, room)
        frame_offsets = [run + k * tf - seg_starts[k] for k in range(config.temporal_segments)]
    else:
        frame_offsets = []
        for lo, hi in partition.temporal:
            room = hi - lo - tf
            frame_offsets.append(room // 2 if centered else _draw(rng, room))

    shared: dict[tuple[int, int], tuple[int, int]] = {}
    offsets = []
    for k in range(config.temporal_segments):
        for i in range(config.spatial_grids):
            for j in range(config.spatial_grids):
                if config.alignment == "per_clip" and (i, j) in shared:
                    top, left = shared[(i, j)]
                else:
                    row_lo, row_hi = partition.rows[i]
                    col_lo, col_hi = partition.cols[j]
                    room_y = row_hi - row_lo - sf
                    room_x = col_hi - col_lo - sf
                    if centered:
                        top, left = room_y // 2, room_x // 2
                    else:
                        top, left = _draw(rng, room_y), _draw(rng, room_x)
                    if config.alignment == "per_clip":
                        shared[(i, j)] = (top, left)
                offsets.append(CubeOffset(k, i, j, frame_offsets[k], top, left))
    return tuple(offsets)


@dataclass(frozen=True, eq=False)
class Fragment:
    """Spliced cube tensor plus the provenance needed to reproduce it.

    ``offsets`` is ordered like the fragment blocks: the n-th entry fills
    the n-th (segment, row, col) block in row-major order.  For fragments
    straight out of :func:`sample_offsets` the n-th entry also *names*
    that block; permuting the list moves source cubes between blocks,
    which is what the shuffled-patch ablations rely on.
    """

    data: np.ndarray
    offsets: tuple[CubeOffset, ...]
    config: SamplingConfig
    source_dims: tuple[int, int, int]

    def __post_init__(self):
        self.data.flags.writeable = False


def splice(video: VideoVolume, offsets, config: SamplingConfig) -> Fragment:
    """Gather cubes into the fragment tensor; a pure copy, pixels untouched."""
    t, h, w, c = video.data.shape
    part = partition_grids(config, (t, h, w))
    gt, gf = config.temporal_segments, config.spatial_grids
    tf, sf = config.frames_per_cube, config.patch_side
    offsets = tuple(offsets)
    if len(offsets) != gt * gf * gf:
        raise GeometryError(
            f"need {gt * gf * gf} cube offsets, got {len(offsets)}"
        )
    out = np.empty((gt * tf, gf * sf, gf * sf, c), np.uint8)
    for n, off in enumerate(offsets):
        k, rest = divmod(n, gf * gf)
        i, j = divmod(rest, gf)
        f0 = part.temporal[off.segment][0] + off.frame
        y0 = part.rows[off.row][0] + off.top
        x0 = part.cols[off.col][0] + off.left
        if not (0 <= f0 and f0 + tf <= t and 0 <= y0 and y0 + sf <= h and 0 <= x0 and x0 + sf <= w):
            raise GeometryError(f"cube {off} reaches outside the video")
        out[k * tf:(k + 1) * tf, i * sf:(i + 1) * sf, j * sf:(j + 1) * sf] = \
            video.data[f0:f0 + tf, y0:y0 + sf, x0:x0 + sf]
    return Fragment(data=out, offsets=offsets, config=config, source_dims=(t, h, w))


def upscale_to_fit(video: VideoVolume, config: SamplingConfig) -> VideoVolume:
    """Nearest-neighbor integer spatial upscale until the grids fit ``config``.

    Synthesizes pixels, so sampling never does this implicitly; callers opt
    in for undersized material.  Returns the input unchanged when it
    already fits.  Short videos (temporal axis) are not rescued.
    """
    t, h, w, _ = video.data.shape
    need = config.spatial_grids * config.patch_side
    factor = max(-(-need // h), -(-need // w), 1)
    if factor == 1:
        return video
    data = video.data.repeat(factor, axis=1).repeat(factor, axis=2)
    return VideoVolume(data=data, fps=video.fps)


def sample_fragment(video: VideoVolume, config: SamplingConfig, rng=None,
                    upscale: bool = False) -> Fragment:
    """Partition, draw offsets, splice.  ``rng`` defaults to a fresh
    generator seeded with ``config.seed``."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    if upscale:
        video = upscale_to_fit(video, config)
    part = partition_grids(config, video.data.shape[:3])
    offsets = sample_offsets(config, part, rng)
    return splice(video, offsets, config)


def sample_clip_fragments(video: VideoVolume, config: SamplingConfig, clips: int, rng=None):
    """Dense-mode fragments at evenly spaced run positions covering the video.

    Used for whole-video inference: scores of the returned fragments are
    averaged by the caller.
    """
    if config.temporal_policy != "dense":
        raise GeometryError("clip covering requires temporal_policy='dense'")
    if clips < 1:
        raise GeometryError("clips must be >= 1")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    t = video.data.shape[0]
    part = partition_grids(config, video.data.shape[:3])
    room = t - config.fragment_frames
    if clips == 1:
        starts = [room // 2]
    else:
        starts = [room * c // (clips - 1) for c in range(clips)]
    out = []
    for run in starts:
        offsets = _sample_offsets(config, part, rng, forced_run_start=run)
        out.append(splice(video, offsets, config))
    return out


def shuffle_offsets(offsets, rng) -> tuple[CubeOffset, ...]:
    """Random permutation of cube order, for shuffled-patch ablations."""
    offsets = tuple(offsets)
    perm = rng.permutation(len(offsets))
    return tuple(offsets[p] for p in perm)


@dataclass(frozen=True)
class ProvenanceReport:
    ok: bool
    failure: str | None = None
    block: tuple[int, int, int] | None = None


def verify_provenance(fragment: Fragment, video: VideoVolume) -> ProvenanceReport:
    """Check the fragment against its claimed source, pixel for pixel.

    Confirms every block equals the video slice named by its offset
    entry, which also pins frame continuity and the shared per-cube
    spatial alignment.  In segmented mode, cubes must lie inside their
    own segment.
    """
    t, h, w, c = video.data.shape
    cfg = fragment.config
    if fragment.source_dims != (t, h, w):
        return ProvenanceReport(False, f"source dims {fragment.source_dims} != video {(t, h, w)}")
    try:
        part = partition_grids(cfg, (t, h, w))
    except GeometryError as exc:
        return ProvenanceReport(False, str(exc))
    gt, gf = cfg.temporal_segments, cfg.spatial_grids
    tf, sf = cfg.frames_per_cube, cfg.patch_side
    expected_shape = (gt * tf, gf * sf, gf * sf, c)
    if fragment.data.shape != expected_shape:
        return ProvenanceReport(False, f"fragment shape {fragment.data.shape} != {expected_shape}")
    if len(fragment.offsets) != gt * gf * gf:
        return ProvenanceReport(False, f"{len(fragment.offsets)} offsets for {gt * gf * gf} blocks")

    for n, off in enumerate(fragment.offsets):
        k, rest = divmod(n, gf * gf)
        i, j = divmod(rest, gf)
        seg_lo, seg_hi = part.temporal[off.segment]
        f0 = seg_lo + off.frame
        y0 = part.rows[off.row][0] + off.top
        x0 = part.cols[off.col][0] + off.left
        if cfg.temporal_policy == "segmented" and not (0 <= off.frame and f0 + tf <= seg_hi):
            return ProvenanceReport(False, f"cube {off} leaves its segment", (k, i, j))
        if not (0 <= f0 and f0 + tf <= t and 0 <= y0 and y0 + sf <= h and 0 <= x0 and x0 + sf <= w):
            return ProvenanceReport(False, f"cube {off} reaches outside the video", (k, i, j))
        block = fragment.data[k * tf:(k + 1) * tf, i * sf:(i + 1) * sf, j * sf:(j + 1) * sf]
        source = video.data[f0:f0 + tf, y0:y0 + sf, x0:x0 + sf]
        if not np.array_equal(block, source):
            return ProvenanceReport(False, "pixel mismatch against source", (k, i, j))
    return ProvenanceReport(True)


def sampled_fraction(dims, config: SamplingConfig, spatial_only: bool = False) -> float:
    """Sampled-to-total pixel ratio; spatial_only ignores the temporal axis."""
    t, h, w = dims[0], dims[1], dims[2]
    gf, sf = config.spatial_grids, config.patch_side
    spatial = (gf * gf * sf * sf) / (h * w)
    if spatial_only:
        return spatial
    return spatial * (config.temporal_segments * config.frames_per_cube) / t


def save_fragment(fragment: Fragment, path) -> None:
    """Fragment blob (little-endian raw tensor) + JSON sidecar at ``<path>.json``."""
    blobio.atomic_write_bytes(path, blobio.tensor_bytes(fragment.data))
    t, h, w = fragment.source_dims
    sidecar = {
        "shape": list(fragment.data.shape),
        "dtype": "u8",
        "config": fragment.config.to_dict(),
        "offsets": [off.as_list() for off in fragment.offsets],
        "source": {"t": t, "h": h, "w": w},
        "seed": fragment.config.seed,
    }
    blobio.atomic_write_json(os.fspath(path) + ".json", sidecar)


def load_fragment(path) -> Fragment:
    sidecar = blobio.read_json(os.fspath(path) + ".json")
    with open(path, "rb") as fh:
        payload = fh.read()
    data = blobio.tensor_from_bytes(payload, sidecar["shape"], sidecar["dtype"]).copy()
    config = SamplingConfig.from_dict(sidecar["config"])
    offsets = tuple(CubeOffset(*entry) for entry in sidecar["offsets"])
    src = sidecar["source"]
    return Fragment(
        data=data,
        offsets=offsets,
        config=config,
        source_dims=(src["t"], src["h"], src["w"]),
    )
