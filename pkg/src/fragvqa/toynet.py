"""A miniature quality network over fragments, exact enough to gradient-check.

The forward path is: non-overlapping patch embed -> two window-attention
layers with gated relative position biases -> one mean merge that leaves
exactly one feature pixel per sampled cube -> a per-position two-layer
regression head whose outputs are mean-pooled into the final score.

The gated biases are the interesting part.  A spliced fragment puts
unrelated pixels side by side at cube borders, so relative position
alone is ambiguous: the same displacement means "2 pixels apart" inside
a cube but "different scene location" across a border.  Each attention
pair therefore reads its bias from one of two tables, selected by
whether query and key fall in the same cube.

Everything is plain numpy.  Forward math is dtype-agnostic (float32 by
default, float64 for gradient checking), and every trainable tensor has
a hand-derived analytic gradient validated against central differences.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.special import erf

from . import blobio
from .constraint import MatchReport, PoolSchedule, PoolStage, check_match
from .sampler import Fragment, GeometryError, SamplingConfig


class MatchConstraintError(ValueError):
    """The embed/merge path would mix pixels across cube borders."""

    def __init__(self, message, violation=None):
        super().__init__(message)
        self.violation = violation


_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(x):
    """Exact erf-form GeLU."""
    return 0.5 * x * (1.0 + erf(x * _INV_SQRT2))


def gelu_grad(x):
    return 0.5 * (1.0 + erf(x * _INV_SQRT2)) + x * np.exp(-0.5 * x * x) * _INV_SQRT2PI


@dataclass
class LinearMap:
    weight: np.ndarray  # (in_features, out_features)
    bias: np.ndarray  # (out_features,)


@dataclass
class BiasTables:
    """Per-head bias tables indexed by relative displacement.

    ``same_cube`` is read when query and key share a cube, ``cross_cube``
    otherwise.  ``window`` fixes the displacement encoding; attention may
    run with any window no larger than it (rescaled inference reuses the
    same tables).
    """

    same_cube: np.ndarray  # (heads, displacement classes)
    cross_cube: np.ndarray
    window: tuple[int, int, int]

    def __post_init__(self):
        if self.same_cube.shape != self.cross_cube.shape:
            raise ValueError("bias tables must share a shape")
        if self.same_cube.shape[1] != displacement_classes(self.window):
            raise ValueError(
                f"table covers {self.same_cube.shape[1]} displacement classes, "
                f"window {self.window} needs {displacement_classes(self.window)}"
            )


@dataclass
class AttentionLayer:
    query: LinearMap
    key: LinearMap
    value: LinearMap
    out: LinearMap
    tables: BiasTables
    heads: int


@dataclass
class ToyNetWeights:
    patch: tuple[int, int, int]  # patch-embed kernel == stride
    embed: LinearMap  # (patch volume * channels, d)
    layers: tuple[AttentionLayer, ...]
    score_hidden: LinearMap  # (d, d_mid)
    score_out: LinearMap  # (d_mid, 1)


@dataclass(frozen=True, eq=False)
class WindowGeometry:
    """Attention window dims plus the feature-pixel -> cube map."""

    window: tuple[int, int, int]
    cube_map: np.ndarray  # int array (t', h', w') of flat cube ids

    def __post_init__(self):
        for f, w, name in zip(self.cube_map.shape, self.window, "thw"):
            if w < 1 or f % w:
                raise GeometryError(
                    f"window {self.window} does not divide feature dims "
                    f"{self.cube_map.shape} on axis {name}; padding is not supported"
                )


def window_geometry(config: SamplingConfig, patch, window) -> WindowGeometry:
    """Geometry of the post-embed feature grid for a fragment of ``config``."""
    pt, ph, pw = patch
    tf, sf, gf = config.frames_per_cube, config.patch_side, config.spatial_grids
    if tf % pt or sf % ph or sf % pw:
        raise GeometryError(f"patch {patch} does not divide cube ({tf}, {sf}, {sf})")
    feat = (config.fragment_frames // pt, config.fragment_side // ph, config.fragment_side // pw)
    extents = (tf // pt, sf // ph, sf // pw)
    k = np.arange(feat[0]) // extents[0]
    i = np.arange(feat[1]) // extents[1]
    j = np.arange(feat[2]) // extents[2]
    cube_map = (k[:, None, None] * gf + i[None, :, None]) * gf + j[None, None, :]
    return WindowGeometry(window=tuple(window), cube_map=cube_map.astype(np.int64))


def displacement_classes(window) -> int:
    wt, wh, ww = window
    return (2 * wt - 1) * (2 * wh - 1) * (2 * ww - 1)


def relative_index(pos, other, window) -> int:
    """Bijective index of the displacement pos-other within one window."""
    for p, q, w, name in zip(pos, other, window, "thw"):
        if p // w != q // w:
            raise ValueError(
                f"positions {tuple(pos)} and {tuple(other)} fall in different "
                f"windows on axis {name}"
            )
    return _displacement_index(
        tuple(p - q for p, q in zip(pos, other)), window
    )


def _displacement_index(disp, window) -> int:
    wt, wh, ww = window
    dt, dh, dw = disp
    if abs(dt) >= wt or abs(dh) >= wh or abs(dw) >= ww:
        raise ValueError(f"displacement {disp} exceeds window {window}")
    return ((dt + wt - 1) * (2 * wh - 1) + (dh + wh - 1)) * (2 * ww - 1) + (dw + ww - 1)


def grpb_gate(pos, other, geometry: WindowGeometry) -> int:
    """1 iff both feature pixels come from the same sampled cube."""
    return int(geometry.cube_map[tuple(pos)] == geometry.cube_map[tuple(other)])


def grpb_bias(pos, other, tables: BiasTables, geometry: WindowGeometry) -> np.ndarray:
    """Per-head bias for one (query, key) pair: the same-cube table entry
    when gated on, the cross-cube entry otherwise."""
    for p, q, w in zip(pos, other, geometry.window):
        if p // w != q // w:
            raise ValueError(f"positions {tuple(pos)}, {tuple(other)} span windows")
    idx = _displacement_index(tuple(p - q for p, q in zip(pos, other)), tables.window)
    if grpb_gate(pos, other, geometry):
        return tables.same_cube[:, idx]
    return tables.cross_cube[:, idx]


def _window_pair_indices(window, table_window) -> np.ndarray:
    """(N, N) displacement-class indices for all ordered pairs in a window."""
    wt, wh, ww = window
    coords = np.stack(
        np.meshgrid(np.arange(wt), np.arange(wh), np.arange(ww), indexing="ij"),
        axis=-1,
    ).reshape(-1, 3)
    disp = coords[:, None, :] - coords[None, :, :]
    bt, bh, bw = table_window
    return ((disp[..., 0] + bt - 1) * (2 * bh - 1) + (disp[..., 1] + bh - 1)) * (
        2 * bw - 1
    ) + (disp[..., 2] + bw - 1)


def _validate_attention(x, layer: AttentionLayer, geometry: WindowGeometry):
    if x.shape[:3] != geometry.cube_map.shape:
        raise GeometryError(
            f"feature dims {x.shape[:3]} do not match geometry {geometry.cube_map.shape}"
        )
    d = x.shape[3]
    if layer.query.weight.shape[0] != d:
        raise GeometryError(f"layer expects {layer.query.weight.shape[0]} channels, got {d}")
    if d % layer.heads:
        raise GeometryError(f"{layer.heads} heads do not divide {d} channels")
    for gw, tw in zip(geometry.window, layer.tables.window):
        if gw > tw:
            raise GeometryError(
                f"attention window {geometry.window} exceeds table window "
                f"{layer.tables.window}"
            )


def _window_origins(dims, window):
    return product(*(range(0, ext, w) for ext, w in zip(dims, window)))


def _attention_forward(x, layer, geometry, gated, keep_cache):
    _validate_attention(x, layer, geometry)
    wt, wh, ww = geometry.window
    n = wt * wh * ww
    heads = layer.heads
    d = x.shape[3]
    dh = d // heads
    scale = 1.0 / math.sqrt(dh)
    idx = _window_pair_indices(geometry.window, layer.tables.window)
    same = layer.tables.same_cube[:, idx]  # (heads, N, N)
    cross = layer.tables.cross_cube[:, idx]

    out = np.empty_like(x)
    caches = []
    for o0, o1, o2 in _window_origins(x.shape[:3], geometry.window):
        sl = (slice(o0, o0 + wt), slice(o1, o1 + wh), slice(o2, o2 + ww))
        xs = x[sl].reshape(n, d)
        q = (xs @ layer.query.weight + layer.query.bias).reshape(n, heads, dh).transpose(1, 0, 2)
        k = (xs @ layer.key.weight + layer.key.bias).reshape(n, heads, dh).transpose(1, 0, 2)
        v = (xs @ layer.value.weight + layer.value.bias).reshape(n, heads, dh).transpose(1, 0, 2)
        scores = q @ k.transpose(0, 2, 1) * scale
        ids = geometry.cube_map[sl].reshape(-1)
        gate = ids[:, None] == ids[None, :]
        bias = np.where(gate, same, cross) if gated else same
        scores = scores + bias
        scores = scores - scores.max(axis=-1, keepdims=True)
        attn = np.exp(scores)
        attn /= attn.sum(axis=-1, keepdims=True)
        ctx = (attn @ v).transpose(1, 0, 2).reshape(n, d)
        out[sl] = (ctx @ layer.out.weight + layer.out.bias).reshape(wt, wh, ww, d)
        if keep_cache:
            caches.append((sl, xs, q, k, v, attn, ctx, gate))
    return out, idx, caches


def window_attention_forward(x, layer: AttentionLayer, geometry: WindowGeometry, gated: bool = True):
    """Per-window multi-head attention with gated relative position biases.

    ``gated=False`` reads every pair from the same-cube table, i.e. plain
    (ungated) relative position bias.
    """
    out, _, _ = _attention_forward(x, layer, geometry, gated, keep_cache=False)
    return out


def attention_maps(x, layer, geometry, gated: bool = True):
    """(origin, per-head attention matrix) per window; for inspection."""
    _, _, caches = _attention_forward(x, layer, geometry, gated, keep_cache=True)
    return [((sl[0].start, sl[1].start, sl[2].start), attn) for sl, _, _, _, _, attn, _, _ in caches]


def window_attention_grads(x, layer, geometry, dout, gated: bool = True):
    """Forward plus analytic gradients against upstream ``dout``.

    Returns (output, grads) where grads holds d/d{query,key,value,out}
    weight and bias, both bias tables, and the input x.
    """
    out, idx, caches = _attention_forward(x, layer, geometry, gated, keep_cache=True)
    heads = layer.heads
    d = x.shape[3]
    dh = d // heads
    scale = 1.0 / math.sqrt(dh)
    g = {
        "query.weight": np.zeros_like(layer.query.weight),
        "query.bias": np.zeros_like(layer.query.bias),
        "key.weight": np.zeros_like(layer.key.weight),
        "key.bias": np.zeros_like(layer.key.bias),
        "value.weight": np.zeros_like(layer.value.weight),
        "value.bias": np.zeros_like(layer.value.bias),
        "out.weight": np.zeros_like(layer.out.weight),
        "out.bias": np.zeros_like(layer.out.bias),
        "tables.same_cube": np.zeros_like(layer.tables.same_cube),
        "tables.cross_cube": np.zeros_like(layer.tables.cross_cube),
        "x": np.zeros_like(x),
    }
    n = idx.shape[0]
    for sl, xs, q, k, v, attn, ctx, gate in caches:
        dyw = dout[sl].reshape(n, d)
        g["out.weight"] += ctx.T @ dyw
        g["out.bias"] += dyw.sum(axis=0)
        dctx = (dyw @ layer.out.weight.T).reshape(n, heads, dh).transpose(1, 0, 2)
        dattn = dctx @ v.transpose(0, 2, 1)
        dv = attn.transpose(0, 2, 1) @ dctx
        # softmax backward: ds = a * (da - sum(da * a))
        tmp = dattn * attn
        dscores = tmp - attn * tmp.sum(axis=-1, keepdims=True)
        for hh in range(heads):
            if gated:
                np.add.at(g["tables.same_cube"][hh], idx[gate], dscores[hh][gate])
                np.add.at(g["tables.cross_cube"][hh], idx[~gate], dscores[hh][~gate])
            else:
                np.add.at(g["tables.same_cube"][hh], idx.reshape(-1), dscores[hh].reshape(-1))
        dq = (dscores @ k) * scale
        dk = (dscores.transpose(0, 2, 1) @ q) * scale
        dq_flat = dq.transpose(1, 0, 2).reshape(n, d)
        dk_flat = dk.transpose(1, 0, 2).reshape(n, d)
        dv_flat = dv.transpose(1, 0, 2).reshape(n, d)
        g["query.weight"] += xs.T @ dq_flat
        g["query.bias"] += dq_flat.sum(axis=0)
        g["key.weight"] += xs.T @ dk_flat
        g["key.bias"] += dk_flat.sum(axis=0)
        g["value.weight"] += xs.T @ dv_flat
        g["value.bias"] += dv_flat.sum(axis=0)
        dxs = dq_flat @ layer.query.weight.T + dk_flat @ layer.key.weight.T + dv_flat @ layer.value.weight.T
        g["x"][sl] += dxs.reshape(dout[sl].shape)
    return out, g


@dataclass(frozen=True, eq=False)
class QualityOutput:
    local: np.ndarray  # predicted local quality per final feature position
    pooled: float  # mean of local


def ip_nlr(features, weights: ToyNetWeights) -> QualityOutput:
    """Regress quality per position, then pool: score every feature pixel
    through L2(GeLU(L1(.))) and average the resulting map."""
    flat = features.reshape(-1, features.shape[-1])
    act = gelu(flat @ weights.score_hidden.weight + weights.score_hidden.bias)
    local = (act @ weights.score_out.weight + weights.score_out.bias)[:, 0]
    local = local.reshape(features.shape[:-1])
    return QualityOutput(local=local, pooled=float(local.mean()))


def ip_nlr_grads(features, weights: ToyNetWeights, dlocal):
    """Analytic gradients of the regression head against upstream ``dlocal``."""
    flat = features.reshape(-1, features.shape[-1])
    hidden = flat @ weights.score_hidden.weight + weights.score_hidden.bias
    act = gelu(hidden)
    dl = np.asarray(dlocal).reshape(-1, 1)
    dact = dl @ weights.score_out.weight.T
    dhidden = dact * gelu_grad(hidden)
    return {
        "score_out.weight": act.T @ dl,
        "score_out.bias": dl.sum(axis=0),
        "score_hidden.weight": flat.T @ dhidden,
        "score_hidden.bias": dhidden.sum(axis=0),
        "features": (dhidden @ weights.score_hidden.weight.T).reshape(features.shape),
    }


def pool_first_head(features, weights: ToyNetWeights) -> float:
    """Baseline head: pool positions first, regress once."""
    mean_feat = features.reshape(-1, features.shape[-1]).mean(axis=0)
    act = gelu(mean_feat @ weights.score_hidden.weight + weights.score_hidden.bias)
    return float((act @ weights.score_out.weight + weights.score_out.bias)[0])


def ami_window(base_window, base_grids, new_grids) -> tuple[int, int, int]:
    """Rescale attention windows proportionally to grid counts.

    Keeps window/grid constant per axis so windows keep covering the
    same number of cubes at any sampling density.
    """
    scaled = []
    for w0, g0, g1, name in zip(base_window, base_grids, new_grids, "thw"):
        num = w0 * g1
        if num % g0:
            raise GeometryError(
                f"rescaled window {w0}*{g1}/{g0} is not an integer on axis {name}"
            )
        scaled.append(num // g0)
    return tuple(scaled)


def toy_schedule(weights: ToyNetWeights, config: SamplingConfig) -> PoolSchedule:
    """The embed + merge path expressed as a pooling schedule."""
    pt, ph, pw = weights.patch
    tf, sf = config.frames_per_cube, config.patch_side
    frag_dims = (config.fragment_frames, config.fragment_side, config.fragment_side)
    embed = PoolStage(kernel=weights.patch, stride=weights.patch)
    if tf % pt or sf % ph or sf % pw:
        report = check_match(PoolSchedule((embed,), frag_dims), (tf, sf))
        if not report.ok:
            raise MatchConstraintError(
                f"patch embed straddles cube borders: {report.violation}",
                report.violation,
            )
        raise GeometryError(f"patch {weights.patch} does not divide cube ({tf}, {sf}, {sf})")
    merge = PoolStage(kernel=(tf // pt, sf // ph, sf // pw), stride=(tf // pt, sf // ph, sf // pw))
    return PoolSchedule(stages=(embed, merge), fragment_dims=frag_dims)


def check_toy_geometry(weights: ToyNetWeights, config: SamplingConfig) -> MatchReport:
    schedule = toy_schedule(weights, config)
    return check_match(schedule, (config.frames_per_cube, config.patch_side))


def toy_forward(fragment: Fragment, weights: ToyNetWeights, geometry: WindowGeometry,
                gated: bool = True) -> QualityOutput:
    """Full forward pass; refuses geometries that break the match constraint."""
    cfg = fragment.config
    report = check_toy_geometry(weights, cfg)
    if not report.ok:
        raise MatchConstraintError(
            f"pooling schedule violates the match constraint: {report.violation}",
            report.violation,
        )
    x = fragment.data.astype(np.float32) / np.float32(255.0)
    feats = _embed(x, weights)
    if feats.shape[:3] != geometry.cube_map.shape:
        raise GeometryError(
            f"geometry built for feature dims {geometry.cube_map.shape}, "
            f"fragment embeds to {feats.shape[:3]}"
        )
    for layer in weights.layers:
        feats = window_attention_forward(feats, layer, geometry, gated=gated)
    merged = _merge_per_cube(feats, weights, cfg)
    return ip_nlr(merged, weights)


def _embed(x, weights: ToyNetWeights):
    t, h, w, c = x.shape
    pt, ph, pw = weights.patch
    if t % pt or h % ph or w % pw:
        raise GeometryError(f"patch {weights.patch} does not tile volume {(t, h, w)}")
    blocks = (
        x.reshape(t // pt, pt, h // ph, ph, w // pw, pw, c)
        .transpose(0, 2, 4, 1, 3, 5, 6)
        .reshape(t // pt, h // ph, w // pw, pt * ph * pw * c)
    )
    if blocks.shape[-1] != weights.embed.weight.shape[0]:
        raise GeometryError(
            f"embed expects {weights.embed.weight.shape[0]} inputs per patch, "
            f"got {blocks.shape[-1]}"
        )
    return blocks @ weights.embed.weight + weights.embed.bias


def _merge_per_cube(feats, weights: ToyNetWeights, cfg: SamplingConfig):
    pt, ph, pw = weights.patch
    gt, gf = cfg.temporal_segments, cfg.spatial_grids
    et, eh, ew = cfg.frames_per_cube // pt, cfg.patch_side // ph, cfg.patch_side // pw
    d = feats.shape[-1]
    return feats.reshape(gt, et, gf, eh, gf, ew, d).mean(axis=(1, 3, 5))


def init_toy_weights(seed: int, channels: int, embed_dim: int, heads: int,
                     hidden_dim: int, window, patch, layers: int = 2,
                     dtype=np.float32) -> ToyNetWeights:
    """Seeded uniform [-0.1, 0.1] weights; bias tables start at zero."""
    if embed_dim % heads:
        raise GeometryError(f"{heads} heads do not divide embed dim {embed_dim}")
    rng = np.random.default_rng(seed)

    def lin(n_in, n_out):
        return LinearMap(
            weight=rng.uniform(-0.1, 0.1, (n_in, n_out)).astype(dtype),
            bias=rng.uniform(-0.1, 0.1, n_out).astype(dtype),
        )

    window = tuple(int(v) for v in window)
    patch = tuple(int(v) for v in patch)
    classes = displacement_classes(window)
    attn = []
    for _ in range(layers):
        attn.append(
            AttentionLayer(
                query=lin(embed_dim, embed_dim),
                key=lin(embed_dim, embed_dim),
                value=lin(embed_dim, embed_dim),
                out=lin(embed_dim, embed_dim),
                tables=BiasTables(
                    same_cube=np.zeros((heads, classes), dtype),
                    cross_cube=np.zeros((heads, classes), dtype),
                    window=window,
                ),
                heads=heads,
            )
        )
    return ToyNetWeights(
        patch=patch,
        embed=lin(patch[0] * patch[1] * patch[2] * channels, embed_dim),
        layers=tuple(attn),
        score_hidden=lin(embed_dim, hidden_dim),
        score_out=lin(hidden_dim, 1),
    )


def _named_tensors(weights: ToyNetWeights):
    yield "embed.weight", weights.embed.weight
    yield "embed.bias", weights.embed.bias
    for i, layer in enumerate(weights.layers):
        for part in ("query", "key", "value", "out"):
            lin = getattr(layer, part)
            yield f"layers.{i}.{part}.weight", lin.weight
            yield f"layers.{i}.{part}.bias", lin.bias
        yield f"layers.{i}.tables.same_cube", layer.tables.same_cube
        yield f"layers.{i}.tables.cross_cube", layer.tables.cross_cube
    yield "score_hidden.weight", weights.score_hidden.weight
    yield "score_hidden.bias", weights.score_hidden.bias
    yield "score_out.weight", weights.score_out.weight
    yield "score_out.bias", weights.score_out.bias


def save_weights(weights: ToyNetWeights, path) -> None:
    """One blob of concatenated tensors + JSON manifest at ``<path>.json``."""
    chunks = []
    entries = []
    offset = 0
    for name, arr in _named_tensors(weights):
        payload = blobio.tensor_bytes(arr)
        entries.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "dtype": blobio.dtype_code(arr.dtype),
                "offset": offset,
            }
        )
        chunks.append(payload)
        offset += len(payload)
    manifest = {
        "patch": list(weights.patch),
        "heads": weights.layers[0].heads if weights.layers else 1,
        "windows": [list(layer.tables.window) for layer in weights.layers],
        "tensors": entries,
    }
    blobio.atomic_write_bytes(path, b"".join(chunks))
    blobio.atomic_write_json(os.fspath(path) + ".json", manifest)


def load_weights(path) -> ToyNetWeights:
    manifest = blobio.read_json(os.fspath(path) + ".json")
    with open(path, "rb") as fh:
        blob = fh.read()
    tensors = {}
    for entry in manifest["tensors"]:
        dt = blobio.DTYPE_CODES[entry["dtype"]]
        count = int(np.prod(entry["shape"])) * dt.itemsize
        payload = blob[entry["offset"] : entry["offset"] + count]
        tensors[entry["name"]] = blobio.tensor_from_bytes(payload, entry["shape"], entry["dtype"]).copy()

    def lin(prefix):
        return LinearMap(weight=tensors[f"{prefix}.weight"], bias=tensors[f"{prefix}.bias"])

    layers = []
    for i, window in enumerate(manifest["windows"]):
        layers.append(
            AttentionLayer(
                query=lin(f"layers.{i}.query"),
                key=lin(f"layers.{i}.key"),
                value=lin(f"layers.{i}.value"),
                out=lin(f"layers.{i}.out"),
                tables=BiasTables(
                    same_cube=tensors[f"layers.{i}.tables.same_cube"],
                    cross_cube=tensors[f"layers.{i}.tables.cross_cube"],
                    window=tuple(window),
                ),
                heads=int(manifest["heads"]),
            )
        )
    return ToyNetWeights(
        patch=tuple(manifest["patch"]),
        embed=lin("embed"),
        layers=tuple(layers),
        score_hidden=lin("score_hidden"),
        score_out=lin("score_out"),
    )


def finite_diff_check(f, point, analytic, step: float = 1e-4) -> float:
    """Max relative disagreement between ``analytic`` and central differences.

    ``f`` maps a flat float64 vector to a scalar; ``analytic`` is the
    claimed gradient at ``point``.  Relative error uses a 1e-6 floor so
    jointly-zero coordinates do not divide by zero.
    """
    point = np.asarray(point, dtype=np.float64).ravel()
    analytic = np.asarray(analytic, dtype=np.float64).ravel()
    if point.shape != analytic.shape:
        raise ValueError("gradient shape does not match point")
    numeric = np.empty_like(point)
    for idx in range(point.size):
        bumped = point.copy()
        bumped[idx] = point[idx] + step
        hi = f(bumped)
        bumped[idx] = point[idx] - step
        lo = f(bumped)
        numeric[idx] = (hi - lo) / (2.0 * step)
    denom = np.maximum(np.maximum(np.abs(numeric), np.abs(analytic)), 1e-6)
    return float((np.abs(numeric - analytic) / denom).max())
