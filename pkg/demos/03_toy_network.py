"""Toy network walkthrough: fragment in, local quality map out.

The network is deliberately tiny (patch embed, two windowed-attention
layers with gated relative position bias, per-cube merge, regress-then-pool
head), but it exercises every geometric contract for real: the embed path
is match-checked, attention windows tile the feature grid, and the bias
gate knows which feature pairs came from the same sampled cube.

Run: python3 demos/03_toy_network.py
"""

import dataclasses

import numpy as np

from fragvqa import (
    BiasTables,
    SamplingConfig,
    ami_window,
    finite_diff_check,
    init_toy_weights,
    ip_nlr_grads,
    ip_nlr,
    sample_fragment,
    synth_video,
    toy_forward,
    window_geometry,
)

config = SamplingConfig(temporal_segments=4, spatial_grids=3,
                        frames_per_cube=4, patch_side=16, seed=2)
video = synth_video("noise", (40, 120, 150, 3), seed=5)
fragment = sample_fragment(video, config)
print(f"fragment: {fragment.data.shape}")

weights = init_toy_weights(seed=0, channels=3, embed_dim=16, heads=2,
                           hidden_dim=8, window=(2, 3, 3), patch=(2, 4, 4))
geometry = window_geometry(config, weights.patch, (2, 3, 3))
print(f"feature grid after embed: {geometry.cube_map.shape}, "
      f"attention window {geometry.window}")

out = toy_forward(fragment, weights, geometry)
print(f"local quality map: {out.local.shape}, pooled score {out.pooled:.5f}")
print(f"pooled equals the mean of the map: "
      f"{abs(out.pooled - out.local.mean()) < 1e-6}")

# The gate selects between two bias tables: one for feature pairs from the
# same sampled cube, one for pairs that merely sit next to each other in
# the mosaic.  Make the tables equal and the gate must vanish.
rng = np.random.default_rng(1)
table = rng.normal(size=weights.layers[0].tables.same_cube.shape)
degenerate = dataclasses.replace(
    weights,
    layers=tuple(
        dataclasses.replace(
            layer, tables=BiasTables(table, table.copy(), layer.tables.window)
        )
        for layer in weights.layers
    ),
)
gated = toy_forward(fragment, degenerate, geometry, gated=True)
ungated = toy_forward(fragment, degenerate, geometry, gated=False)
print(f"equal tables: gated == ungated is "
      f"{np.array_equal(gated.local, ungated.local)}")

# Sampling density can change at inference.  Rescale the attention window
# with the grid counts and the trained tables still apply (the window can
# only shrink relative to the tables).
small = ami_window((2, 3, 3), base_grids=(4, 3, 3), new_grids=(2, 3, 3))
print(f"half the temporal segments -> window {small}")

# Every backward pass is hand-derived numpy; finite differences keep it
# honest.  Spot-check the quality head.
feats = rng.normal(size=(2, 3, 3, 16))
probe = rng.normal(size=(2, 3, 3))
grads = ip_nlr_grads(feats, weights, probe)
err = finite_diff_check(
    lambda f: float((ip_nlr(f.reshape(feats.shape), weights).local * probe).sum()),
    feats, grads["features"],
)
print(f"quality-head gradient vs finite differences: max rel err {err:.2e}")
