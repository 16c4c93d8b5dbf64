"""Receptive-field checking for pooling schedules over spliced fragments.

Splicing puts unrelated pixels next to each other at cube borders, so a
network may only mix pixels across a border once each cube has already
been reduced to a single feature pixel.  This module decides whether a
pooling schedule honours that rule, by composing each kernel's
receptive set through the stages as a half-open integer interval per
axis.  Strides are capped at the kernel size, which keeps every
receptive set contiguous and the interval arithmetic exact.
"""

from __future__ import annotations

from dataclasses import dataclass

AXES = ("t", "h", "w")


class ScheduleError(ValueError):
    """Schedule does not fit the geometry it is applied to."""


@dataclass(frozen=True)
class PoolStage:
    """One pooling / strided-reduction stage; kernel and stride per axis."""

    kernel: tuple[int, int, int]
    stride: tuple[int, int, int]

    def __post_init__(self):
        if len(self.kernel) != 3 or len(self.stride) != 3:
            raise ScheduleError("kernel and stride must have 3 axes")
        for k, s in zip(self.kernel, self.stride):
            if k < 1 or s < 1:
                raise ScheduleError(f"kernel/stride must be >= 1, got {k}/{s}")
            if s > k:
                raise ScheduleError(
                    f"stride {s} > kernel {k} would skip pixels; not supported"
                )

    @classmethod
    def uniform(cls, kernel: int, stride: int | None = None) -> "PoolStage":
        s = kernel if stride is None else stride
        return cls((kernel,) * 3, (s,) * 3)


@dataclass(frozen=True)
class PoolSchedule:
    """Ordered stages applied to a tensor of ``fragment_dims`` (t, h, w)."""

    stages: tuple[PoolStage, ...]
    fragment_dims: tuple[int, int, int]

    def __post_init__(self):
        if not self.stages:
            raise ScheduleError("schedule needs at least one stage")
        if len(self.fragment_dims) != 3 or min(self.fragment_dims) < 1:
            raise ScheduleError(f"bad fragment dims {self.fragment_dims}")


def _axis_out(extent: int, kernel: int, stride: int) -> int:
    if kernel > extent:
        raise ScheduleError(f"kernel {kernel} exceeds feature extent {extent}")
    return (extent - kernel) // stride + 1


def stage_dims(schedule: PoolSchedule, stage_index: int) -> tuple[int, int, int]:
    """Feature dims after applying stages [0 .. stage_index]."""
    dims = list(schedule.fragment_dims)
    for stage in schedule.stages[: stage_index + 1]:
        dims = [_axis_out(d, k, s) for d, k, s in zip(dims, stage.kernel, stage.stride)]
    return tuple(dims)


def receptive_set(schedule: PoolSchedule, stage_index: int, pixel) -> tuple[tuple[int, int], ...]:
    """Fragment-pixel box feeding one output pixel of stage ``stage_index``.

    Returns one half-open [lo, hi) interval per axis.
    """
    if not 0 <= stage_index < len(schedule.stages):
        raise ScheduleError(f"stage {stage_index} out of range")
    dims = stage_dims(schedule, stage_index)
    for p, d, name in zip(pixel, dims, AXES):
        if not 0 <= p < d:
            raise ScheduleError(f"pixel {p} outside stage output extent {d} on axis {name}")
    box = [(p, p + 1) for p in pixel]
    for stage in reversed(schedule.stages[: stage_index + 1]):
        box = [
            (lo * s, (hi - 1) * s + k)
            for (lo, hi), k, s in zip(box, stage.kernel, stage.stride)
        ]
    return tuple(box)


@dataclass(frozen=True)
class Violation:
    """First kernel whose receptive set crosses a cube border too early."""

    stage: int
    axis: str
    pixel: int
    cubes: tuple[int, ...]


@dataclass(frozen=True)
class MatchReport:
    ok: bool
    violation: Violation | None = None


def _check_axis(stages, extent: int, cube: int):
    """Scan one axis; stages is a list of (kernel, stride) for that axis.

    Returns None or (stage, output_pixel, cubes_touched).  The rule stops
    applying once no cube spans two feature pixels any more.
    """
    if extent % cube:
        raise ScheduleError(f"extent {extent} is not a whole number of {cube}-pixel cubes")
    size = extent
    run_stride, run_kernel = 1, 1  # composed placement of a feature pixel's box
    for m, (k, s) in enumerate(stages):
        out = _axis_out(size, k, s)
        # cube still spread over several input pixels?  input pixel p covers
        # fragment interval [p*run_stride, p*run_stride + run_kernel)
        applies = False
        for c in range(extent // cube):
            lo_px = None
            for p in range(size):
                a = p * run_stride
                b = a + run_kernel
                if a < (c + 1) * cube and b > c * cube:
                    if lo_px is None:
                        lo_px = p
                    elif p > lo_px:
                        applies = True
                        break
            if applies:
                break
        new_kernel = run_kernel + (k - 1) * run_stride
        new_stride = run_stride * s
        if applies:
            for p in range(out):
                a = p * new_stride
                b = a + new_kernel
                first, last = a // cube, (b - 1) // cube
                if first != last:
                    return m, p, tuple(range(first, last + 1))
        size = out
        run_kernel, run_stride = new_kernel, new_stride
    return None


def check_match(schedule: PoolSchedule, cube_dims) -> MatchReport:
    """Verdict for all three axes; ``cube_dims`` is (frames_per_cube, patch_side).

    Axes are independent; the first offending (stage, axis, pixel) in
    stage order, then t/h/w order, then pixel order is reported.
    """
    tf, sf = cube_dims
    cubes = (tf, sf, sf)
    per_axis = [
        [(stage.kernel[a], stage.stride[a]) for stage in schedule.stages]
        for a in range(3)
    ]
    best = None
    for a in range(3):
        hit = _check_axis(per_axis[a], schedule.fragment_dims[a], cubes[a])
        if hit is not None:
            stage, pixel, touched = hit
            if best is None or (stage, a) < (best.stage, AXES.index(best.axis)):
                best = Violation(stage=stage, axis=AXES[a], pixel=pixel, cubes=touched)
    if best is not None:
        return MatchReport(False, best)
    return MatchReport(True)


def probe_dims(stages, cube_dims, max_cubes: int = 64) -> tuple[int, int, int]:
    """Smallest per-axis probe fragment (>= 2 cubes) every stage can consume.

    Deep schedules need more input than two cubes provide on a short axis;
    doubling the cube count until each stage's kernel fits gives the check
    something representative to scan.
    """
    tf, sf = cube_dims
    cubes = (tf, sf, sf)
    dims = []
    for a in range(3):
        axis_stages = [(st.kernel[a], st.stride[a]) for st in stages]
        n = 2
        while True:
            size = n * cubes[a]
            try:
                for k, s in axis_stages:
                    size = _axis_out(size, k, s)
            except ScheduleError:
                if n >= max_cubes:
                    raise ScheduleError(
                        f"axis {AXES[a]}: schedule not computable even on {max_cubes} cubes"
                    )
                n *= 2
                continue
            break
        dims.append(n * cubes[a])
    return tuple(dims)


def suggest_patch_sides(stages, lo: int = 8, hi: int = 64):
    """Enumerate patch sides in [lo, hi] that a schedule admits spatially.

    Each side is scanned on the smallest computable probe (see
    ``probe_dims``); sizes no probe can make computable count as rejected
    rather than raising.
    """
    axis_stages = [(st.kernel[1], st.stride[1]) for st in stages]
    feasible = []
    for side in range(lo, hi + 1):
        try:
            extent = probe_dims(stages, (side, side))[1]
            hit = _check_axis(axis_stages, extent, side)
        except ScheduleError:
            continue
        if hit is None:
            feasible.append(side)
    return feasible


def parse_stage_spec(spec: str) -> tuple[PoolStage, ...]:
    """Parse ``"4x4x4:2x2x2"`` (kernel == stride) or ``"3x3x3/2x2x2"`` stages.

    Stages are colon-separated; each is a kernel triple, optionally
    followed by ``/`` and a stride triple.
    """
    stages = []
    for part in spec.split(":"):
        if not part:
            raise ScheduleError(f"empty stage in spec {spec!r}")
        if "/" in part:
            kernel_s, stride_s = part.split("/", 1)
        else:
            kernel_s, stride_s = part, part
        try:
            kernel = tuple(int(x) for x in kernel_s.split("x"))
            stride = tuple(int(x) for x in stride_s.split("x"))
        except ValueError as exc:
            raise ScheduleError(f"bad stage {part!r} in spec {spec!r}") from exc
        if len(kernel) != 3 or len(stride) != 3:
            raise ScheduleError(f"stage {part!r} must give 3 axes")
        stages.append(PoolStage(kernel=kernel, stride=stride))
    return tuple(stages)
