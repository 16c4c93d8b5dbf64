"""Command-line front end.

One executable with subcommands for sampling fragments, validating
pooling schedules, scoring fragments, computing metrics/losses, and
batch processing manifests.  Exit codes: 0 success, 1 for malformed
inputs or failed items, 2 for usage errors.  Set FRAG_LOG to control
log verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import blobio
from .constraint import (
    PoolSchedule,
    ScheduleError,
    check_match,
    parse_stage_spec,
    probe_dims,
    suggest_patch_sides,
)
from .losses import MONO_WEIGHT_DEFAULT, loss_fusion
from .metrics import DegenerateInputError, krcc, plcc, srcc, stability_report
from .sampler import (
    ALIGNMENTS,
    OFFSET_POLICIES,
    TEMPORAL_POLICIES,
    GeometryError,
    SamplingConfig,
    load_fragment,
    sample_fragment,
    sampled_fraction,
    save_fragment,
)
from .toynet import (
    MatchConstraintError,
    ToyNetWeights,
    init_toy_weights,
    load_weights,
    save_weights,
    toy_forward,
    window_geometry,
)
from .video import VideoFormatError, load_raw, load_y4m

log = logging.getLogger("fragvqa")

_DOMAIN_ERRORS = (
    VideoFormatError,
    GeometryError,
    ScheduleError,
    MatchConstraintError,
    DegenerateInputError,
    ValueError,
    OSError,
    KeyError,
)


def _triple(text: str) -> tuple[int, int, int]:
    parts = text.replace(",", "x").split("x")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected t x h x w triple, got {text!r}")
    try:
        return tuple(int(p) for p in parts)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _load_video(path: str):
    if path.endswith(".y4m"):
        return load_y4m(path)
    return load_raw(path)


def _config_from_args(args) -> SamplingConfig:
    return SamplingConfig(
        temporal_segments=args.gt,
        spatial_grids=args.gf,
        frames_per_cube=args.tf,
        patch_side=args.sf,
        seed=args.seed,
        alignment=args.align,
        offset_policy=args.offset_policy,
        temporal_policy=args.temporal,
    )


def _emit(args, payload: dict, human: str | None = None) -> None:
    if getattr(args, "json", False) or human is None:
        print(json.dumps(payload, sort_keys=True))
    else:
        print(human)


def _add_geometry_flags(sub):
    sub.add_argument("--gt", type=int, required=True, help="temporal segments")
    sub.add_argument("--gf", type=int, required=True, help="spatial grids per side")
    sub.add_argument("--tf", type=int, required=True, help="frames per cube")
    sub.add_argument("--sf", type=int, required=True, help="patch side in pixels")


def _cmd_sample(args) -> int:
    video = _load_video(args.input)
    config = _config_from_args(args)
    fragment = sample_fragment(video, config, upscale=args.upscale)
    save_fragment(fragment, args.out)
    log.info("sampled %s from %s", fragment.data.shape, args.input)
    _emit(
        args,
        {
            "fragment": args.out,
            "sidecar": args.out + ".json",
            "shape": list(fragment.data.shape),
            "source": list(video.data.shape),
            "seed": config.seed,
        },
        f"fragment {fragment.data.shape} from {tuple(video.data.shape)} -> {args.out}",
    )
    return 0


def _cmd_validate(args) -> int:
    stages = parse_stage_spec(args.stages)
    if args.cubes is None:
        frag_dims = probe_dims(stages, (args.tf, args.sf))
    else:
        frag_dims = (args.cubes[0] * args.tf, args.cubes[1] * args.sf, args.cubes[2] * args.sf)
    schedule = PoolSchedule(stages=stages, fragment_dims=frag_dims)
    report = check_match(schedule, (args.tf, args.sf))
    payload = {"ok": report.ok, "violation": None, "stages": args.stages, "probe": list(frag_dims)}
    human = "match constraint satisfied"
    if not report.ok:
        v = report.violation
        payload["violation"] = {
            "stage": v.stage,
            "axis": v.axis,
            "pixel": v.pixel,
            "cubes": list(v.cubes),
        }
        human = (
            f"violation at stage {v.stage}, axis {v.axis}, output pixel {v.pixel} "
            f"(touches cubes {', '.join(map(str, v.cubes))})"
        )
    if args.suggest:
        payload["feasible_patch_sides"] = suggest_patch_sides(stages)
        human += f"\nfeasible patch sides 8..64: {payload['feasible_patch_sides']}"
    _emit(args, payload, human)
    return 0


def _geometry_for(weights: ToyNetWeights, config: SamplingConfig, window=None):
    if window is None:
        window = weights.layers[0].tables.window if weights.layers else (1, 1, 1)
    return window_geometry(config, weights.patch, window)


def _write_quality_map(local: np.ndarray, csv_path: str) -> str:
    lines = ["frame,row,col,score"]
    t, h, w = local.shape
    for ti in range(t):
        for hi in range(h):
            for wi in range(w):
                lines.append(f"{ti},{hi},{wi},{float(local[ti, hi, wi])!r}")
    blobio.atomic_write_bytes(csv_path, ("\n".join(lines) + "\n").encode("ascii"))

    # 8-bit PGM heat map, min-max normalized, temporal slices stacked vertically
    lo, hi = float(local.min()), float(local.max())
    if hi > lo:
        norm = (local - lo) / (hi - lo)
    else:
        norm = np.zeros_like(local)
    img = np.rint(norm * 255).astype(np.uint8).reshape(t * h, w)
    pgm_path = os.path.splitext(csv_path)[0] + ".pgm"
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
    blobio.atomic_write_bytes(pgm_path, header + img.tobytes())
    return pgm_path


def _cmd_score(args) -> int:
    fragment = load_fragment(args.frag)
    weights = load_weights(args.weights)
    geometry = _geometry_for(weights, fragment.config, args.window)
    result = toy_forward(fragment, weights, geometry)
    payload = {"score": result.pooled}
    if args.map_out:
        pgm = _write_quality_map(result.local, args.map_out)
        payload["map_csv"] = args.map_out
        payload["map_pgm"] = pgm
    if args.json:
        print(json.dumps(payload, sort_keys=True))
    else:
        print(repr(result.pooled))
    return 0


def _read_score_column(path: str) -> np.ndarray:
    values = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if line:
            values.append(float(line))
    return np.asarray(values, dtype=np.float64)


def _cmd_metrics(args) -> int:
    pred = _read_score_column(args.pred)
    gt = _read_score_column(args.gt)
    _emit(args, {"plcc": plcc(pred, gt), "srcc": srcc(pred, gt), "krcc": krcc(pred, gt)})
    return 0


def _cmd_loss(args) -> int:
    pred = _read_score_column(args.pred)
    gt = _read_score_column(args.gt)
    _emit(args, loss_fusion(pred, gt, args.mono_weight))
    return 0


def _cmd_fraction(args) -> int:
    config = _config_from_args(args)
    dims = (args.frames, args.height, args.width)
    _emit(
        args,
        {
            "fraction": sampled_fraction(dims, config),
            "spatial_fraction": sampled_fraction(dims, config, spatial_only=True),
        },
    )
    return 0


def _cmd_stability(args) -> int:
    rows = []
    for line in Path(args.scores).read_text().splitlines():
        line = line.strip()
        if line:
            rows.append([float(v) for v in line.split(",")])
    _emit(args, stability_report(rows, (args.lo, args.hi)))
    return 0


def _cmd_init_weights(args) -> int:
    weights = init_toy_weights(
        seed=args.seed,
        channels=args.channels,
        embed_dim=args.dim,
        heads=args.heads,
        hidden_dim=args.hidden,
        window=args.window,
        patch=args.patch,
        layers=args.layers,
    )
    save_weights(weights, args.out)
    _emit(
        args,
        {"weights": args.out, "manifest": args.out + ".json"},
        f"wrote toy weights -> {args.out}",
    )
    return 0


_BATCH_CONFIG_BASE = {
    "temporal_segments": 8,
    "spatial_grids": 7,
    "frames_per_cube": 4,
    "patch_side": 32,
}


def _batch_worker(payload) -> dict:
    index, item, out_dir, weights_path = payload
    result = {"video": item.get("video"), "fragments": [], "scores": None, "error": None}
    try:
        video = _load_video(item["video"])
        merged = dict(_BATCH_CONFIG_BASE)
        merged.update(item.get("config", {}))
        repeats = int(item.get("repeats", 1))
        if repeats < 1:
            raise GeometryError(f"repeats must be >= 1, got {repeats}")
        seed_base = int(item.get("seed_base", 0))
        weights = load_weights(weights_path) if weights_path else None
        scores = []
        for r in range(repeats):
            merged["seed"] = seed_base + r  # repeat r is independent of the others
            config = SamplingConfig.from_dict(merged)
            fragment = sample_fragment(video, config)
            out_path = os.path.join(out_dir, f"item{index:03d}_rep{r}.bin")
            save_fragment(fragment, out_path)
            result["fragments"].append(out_path)
            if weights is not None:
                geometry = _geometry_for(weights, config)
                scores.append(toy_forward(fragment, weights, geometry).pooled)
        if weights is not None:
            result["scores"] = scores
    except _DOMAIN_ERRORS as exc:
        result["error"] = str(exc)
    return result


def _cmd_batch(args) -> int:
    manifest = blobio.read_json(args.manifest)
    items = manifest["items"]
    if len({item.get("video") for item in items}) != len(items):
        raise ValueError("manifest video paths must be unique")
    os.makedirs(args.out_dir, exist_ok=True)
    payloads = [(i, item, args.out_dir, args.weights) for i, item in enumerate(items)]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_batch_worker, payloads))
    else:
        results = [_batch_worker(p) for p in payloads]

    failed = sum(1 for r in results if r["error"])
    summary = {"items": results, "failed": failed}
    summary_path = os.path.join(args.out_dir, "summary.json")
    blobio.atomic_write_json(summary_path, summary)
    scored = [r for r in results if r["scores"]]
    if scored:
        lines = [",".join(repr(s) for s in r["scores"]) for r in scored]
        blobio.atomic_write_bytes(
            os.path.join(args.out_dir, "scores.csv"),
            ("\n".join(lines) + "\n").encode("ascii"),
        )
    for r in results:
        if r["error"]:
            log.warning("item %s failed: %s", r["video"], r["error"])
    _emit(
        args,
        {"summary": summary_path, "failed": failed, "items": len(results)},
        f"{len(results) - failed}/{len(results)} items ok, summary -> {summary_path}",
    )
    return 0 if failed == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fragvqa",
        description="Grid mini-cube fragment sampling and quality tooling",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-parsable output")
    subs = parser.add_subparsers(dest="command", required=True)

    sample = subs.add_parser("sample", parents=[common], help="sample a fragment from a video")
    sample.add_argument("--input", required=True, help="video (.y4m, or raw blob with sidecar)")
    _add_geometry_flags(sample)
    sample.add_argument("--seed", type=int, default=0)
    sample.add_argument("--align", choices=ALIGNMENTS, default="per_cube")
    sample.add_argument("--offset-policy", choices=OFFSET_POLICIES, default="random")
    sample.add_argument("--temporal", choices=TEMPORAL_POLICIES, default="segmented")
    sample.add_argument(
        "--upscale",
        action="store_true",
        help="integer nearest-neighbor upscale of undersized inputs (synthesizes pixels)",
    )
    sample.add_argument("--out", required=True, help="fragment blob path")
    sample.set_defaults(func=_cmd_sample)

    validate = subs.add_parser("validate", parents=[common], help="check a pooling schedule")
    validate.add_argument("--tf", type=int, required=True, help="frames per cube")
    validate.add_argument("--sf", type=int, required=True, help="patch side")
    validate.add_argument(
        "--stages",
        required=True,
        help="colon-separated stages, 4x4x4 (kernel=stride) or 3x3x3/2x2x2 (kernel/stride)",
    )
    validate.add_argument(
        "--cubes",
        type=_triple,
        default=None,
        help="cubes per axis of the probe fragment (default: smallest computable, >= 2 per axis)",
    )
    validate.add_argument("--suggest", action="store_true", help="also list feasible patch sides 8..64")
    validate.set_defaults(func=_cmd_validate)

    score = subs.add_parser("score", parents=[common], help="run the toy net on a fragment")
    score.add_argument("--frag", required=True)
    score.add_argument("--weights", required=True)
    score.add_argument("--window", type=_triple, default=None, help="override attention window (t x h x w)")
    score.add_argument("--map-out", default=None, help="write local quality map CSV (+ PGM sibling)")
    score.set_defaults(func=_cmd_score)

    metrics = subs.add_parser("metrics", parents=[common], help="correlations between two score files")
    metrics.add_argument("--pred", required=True, help="CSV, one score per line")
    metrics.add_argument("--gt", required=True)
    metrics.set_defaults(func=_cmd_metrics)

    loss = subs.add_parser("loss", parents=[common], help="training objectives between two score files")
    loss.add_argument("--pred", required=True)
    loss.add_argument("--gt", required=True)
    loss.add_argument("--lambda", dest="mono_weight", type=float, default=MONO_WEIGHT_DEFAULT,
                      help="weight of the monotonicity term")
    loss.set_defaults(func=_cmd_loss)

    fraction = subs.add_parser("fraction", parents=[common], help="sampled-to-total pixel ratio")
    fraction.add_argument("--frames", type=int, required=True)
    fraction.add_argument("--height", type=int, required=True)
    fraction.add_argument("--width", type=int, required=True)
    _add_geometry_flags(fraction)
    fraction.add_argument("--seed", type=int, default=0)
    fraction.add_argument("--align", choices=ALIGNMENTS, default="per_cube")
    fraction.add_argument("--offset-policy", choices=OFFSET_POLICIES, default="random")
    fraction.add_argument("--temporal", choices=TEMPORAL_POLICIES, default="segmented")
    fraction.set_defaults(func=_cmd_fraction)

    stability = subs.add_parser("stability", parents=[common], help="repeat-stability of scores")
    stability.add_argument("--scores", required=True, help="CSV: one video per line, repeats comma-separated")
    stability.add_argument("--lo", type=float, required=True, help="low end of the score scale")
    stability.add_argument("--hi", type=float, required=True, help="high end of the score scale")
    stability.set_defaults(func=_cmd_stability)

    init_w = subs.add_parser("init-weights", parents=[common], help="write seeded toy-net weights")
    init_w.add_argument("--channels", type=int, default=3)
    init_w.add_argument("--dim", type=int, default=16)
    init_w.add_argument("--heads", type=int, default=2)
    init_w.add_argument("--hidden", type=int, default=8)
    init_w.add_argument("--layers", type=int, default=2)
    init_w.add_argument("--window", type=_triple, required=True)
    init_w.add_argument("--patch", type=_triple, required=True)
    init_w.add_argument("--seed", type=int, default=0)
    init_w.add_argument("--out", required=True)
    init_w.set_defaults(func=_cmd_init_weights)

    batch = subs.add_parser("batch", parents=[common], help="process a manifest of videos")
    batch.add_argument("--manifest", required=True, help="JSON manifest of items")
    batch.add_argument("--out-dir", required=True)
    batch.add_argument("--workers", type=int, default=1)
    batch.add_argument("--weights", default=None, help="also score each fragment")
    batch.set_defaults(func=_cmd_batch)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=getattr(logging, os.environ.get("FRAG_LOG", "WARNING").upper(), logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _DOMAIN_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
