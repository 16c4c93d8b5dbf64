"""Match-constraint walkthrough: which pooling stacks respect cube borders.

A fragment is a mosaic of mini-cubes from unrelated places in the video.
Pooling that mixes pixels across a cube border invents gradients that do
not exist in the source, so every pooling stage must keep its receptive
fields inside single cubes for as long as cubes are still resolvable.

Run: python3 demos/02_match_constraint.py
"""

from fragvqa import (
    PoolSchedule,
    check_match,
    parse_stage_spec,
    probe_dims,
    receptive_set,
    suggest_patch_sides,
)

# A typical backbone: 4x patch embed then three 2x reductions.
stages = parse_stage_spec("4x4x4:2x2x2:2x2x2:2x2x2")
dims = probe_dims(stages, (4, 32))
print(f"probe fragment for the check: {dims}")

schedule = PoolSchedule(stages, dims)
report = check_match(schedule, (4, 32))
print(f"32px patches under 4x:2x:2x:2x -> ok={report.ok}")

# Receptive fields compose through the stack; the validator is pure
# interval arithmetic on them.  Row 1 of the stage-1 output:
lo, hi = receptive_set(schedule, 1, (0, 1, 0))[1]
print(f"stage-1 output row 1 covers fragment rows [{lo}, {hi})")

# 48px patches fail the same stack: by stage 3 a feature pixel straddles
# two cubes while cubes still span multiple pixels.
stages48 = parse_stage_spec("4x4x4:2x2x2:2x2x2:2x2x2")
rep48 = check_match(PoolSchedule(stages48, probe_dims(stages48, (4, 48))), (4, 48))
v = rep48.violation
print(f"48px patches -> ok={rep48.ok}; first violation: stage {v.stage}, "
      f"axis {v.axis}, output pixel {v.pixel}, cubes {v.cubes}")

# Overlapping pooling (stride < kernel) fails immediately: the very first
# stage reads across a border.
overlap = parse_stage_spec("3x3x3/2x2x2")
repo = check_match(PoolSchedule(overlap, probe_dims(overlap, (4, 32))), (4, 32))
print(f"3x3 stride-2 stage -> ok={repo.ok}, violation at stage "
      f"{repo.violation.stage}")

# Given a backbone, which patch sides are even admissible?
print("feasible power-of-two-ish sides 8..64:",
      suggest_patch_sides(stages))
