"""Grid mini-cube video fragments and a small quality model around them.

The package splits into a sampling side (video IO, grid partitioning,
fragment splicing with provenance) and an analysis side (pooling-schedule
validation, a toy windowed-attention network with gated relative position
bias, regression objectives, and correlation metrics).
"""

from .constraint import (
    AXES,
    MatchReport,
    PoolSchedule,
    PoolStage,
    ScheduleError,
    Violation,
    check_match,
    parse_stage_spec,
    probe_dims,
    receptive_set,
    stage_dims,
    suggest_patch_sides,
)
from .losses import (
    MONO_WEIGHT_DEFAULT,
    loss_fusion,
    loss_lin,
    loss_lin_grad,
    loss_mono,
    loss_mono_grad,
)
from .metrics import (
    DegenerateInputError,
    fractional_ranks,
    krcc,
    plcc,
    srcc,
    stability_report,
)
from .sampler import (
    ALIGNMENTS,
    OFFSET_POLICIES,
    PRESETS,
    TEMPORAL_POLICIES,
    CubeOffset,
    Fragment,
    GeometryError,
    GridPartition,
    ProvenanceReport,
    SamplingConfig,
    load_fragment,
    partition_grids,
    sample_clip_fragments,
    sample_fragment,
    sample_offsets,
    sampled_fraction,
    save_fragment,
    shuffle_offsets,
    splice,
    upscale_to_fit,
    verify_provenance,
)
from .toynet import (
    AttentionLayer,
    BiasTables,
    LinearMap,
    MatchConstraintError,
    QualityOutput,
    ToyNetWeights,
    WindowGeometry,
    ami_window,
    attention_maps,
    check_toy_geometry,
    displacement_classes,
    finite_diff_check,
    gelu,
    gelu_grad,
    grpb_bias,
    grpb_gate,
    init_toy_weights,
    ip_nlr,
    ip_nlr_grads,
    load_weights,
    pool_first_head,
    relative_index,
    save_weights,
    toy_forward,
    toy_schedule,
    window_attention_forward,
    window_attention_grads,
    window_geometry,
)
from .video import (
    VideoFormatError,
    VideoVolume,
    gradient_value,
    load_raw,
    load_y4m,
    synth_video,
    write_raw,
    write_y4m,
)

__version__ = "0.1.0"

__all__ = [
    "AXES",
    "ALIGNMENTS",
    "AttentionLayer",
    "BiasTables",
    "CubeOffset",
    "DegenerateInputError",
    "Fragment",
    "GeometryError",
    "GridPartition",
    "LinearMap",
    "MONO_WEIGHT_DEFAULT",
    "MatchConstraintError",
    "MatchReport",
    "OFFSET_POLICIES",
    "PRESETS",
    "PoolSchedule",
    "PoolStage",
    "ProvenanceReport",
    "QualityOutput",
    "SamplingConfig",
    "ScheduleError",
    "TEMPORAL_POLICIES",
    "ToyNetWeights",
    "VideoFormatError",
    "VideoVolume",
    "Violation",
    "WindowGeometry",
    "ami_window",
    "attention_maps",
    "check_match",
    "check_toy_geometry",
    "displacement_classes",
    "finite_diff_check",
    "fractional_ranks",
    "gelu",
    "gelu_grad",
    "gradient_value",
    "grpb_bias",
    "grpb_gate",
    "init_toy_weights",
    "ip_nlr",
    "ip_nlr_grads",
    "krcc",
    "load_fragment",
    "load_raw",
    "load_weights",
    "load_y4m",
    "loss_fusion",
    "loss_lin",
    "loss_lin_grad",
    "loss_mono",
    "loss_mono_grad",
    "parse_stage_spec",
    "partition_grids",
    "plcc",
    "pool_first_head",
    "probe_dims",
    "receptive_set",
    "relative_index",
    "sample_clip_fragments",
    "sample_fragment",
    "sample_offsets",
    "sampled_fraction",
    "save_fragment",
    "save_weights",
    "shuffle_offsets",
    "splice",
    "srcc",
    "stability_report",
    "stage_dims",
    "suggest_patch_sides",
    "synth_video",
    "toy_forward",
    "toy_schedule",
    "upscale_to_fit",
    "verify_provenance",
    "window_attention_forward",
    "window_attention_grads",
    "window_geometry",
    "write_raw",
    "write_y4m",
]
