import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fragvqa import (
    DegenerateInputError,
    loss_fusion,
    loss_lin,
    loss_mono,
    plcc,
)

finite_floats = st.floats(-100, 100, allow_nan=False, allow_infinity=False)


def test_mono_frozen_value():
    # pairs (0,1) and (1,0) are both mis-ordered: 0.3 + 0.3; (i==j) adds 0
    assert loss_mono([0.5, 0.2], [1.0, 2.0]) == pytest.approx(0.6, abs=1e-12)


def test_fusion_frozen_value():
    out = loss_fusion([0.5, 0.2], [1.0, 2.0], mono_weight=0.3)
    assert out["lin"] == pytest.approx(1.0, abs=1e-12)
    assert out["mono"] == pytest.approx(0.6, abs=1e-12)
    assert out["fusion"] == pytest.approx(1.18, abs=1e-12)


def test_mono_zero_when_order_agrees():
    assert loss_mono([1.0, 2.0, 3.0], [10.0, 20.0, 30.0]) == 0.0


def test_mono_counts_every_misordered_pair():
    # fully reversed: each misordered pair contributes its score gap in
    # both pair orders, so the total is twice the sum of gaps
    pred = np.array([3.0, 2.0, 1.0])
    gt = np.array([1.0, 2.0, 3.0])
    gaps = sum(abs(a - b) for i, a in enumerate(pred) for b in pred[i + 1:])
    assert loss_mono(pred, gt) == pytest.approx(2 * gaps, abs=1e-12)


def test_lin_is_half_one_minus_plcc():
    rng = np.random.default_rng(0)
    for _ in range(25):
        n = rng.integers(2, 30)
        pred = rng.normal(size=n)
        gt = rng.normal(size=n)
        assert loss_lin(pred, gt) == pytest.approx((1 - plcc(pred, gt)) / 2, abs=1e-12)


def test_lin_extremes():
    assert loss_lin([1.0, 2.0, 3.0], [2.0, 4.0, 6.0]) == pytest.approx(0.0, abs=1e-12)
    assert loss_lin([1.0, 2.0, 3.0], [6.0, 4.0, 2.0]) == pytest.approx(1.0, abs=1e-12)


def test_degenerate_inputs_raise():
    with pytest.raises(DegenerateInputError):
        loss_lin([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
    with pytest.raises(DegenerateInputError):
        loss_lin([1.0, 2.0, 3.0], [5.0, 5.0, 5.0])


def test_length_mismatch_raises():
    with pytest.raises(ValueError):
        loss_mono([1.0, 2.0], [1.0])
    with pytest.raises(ValueError):
        loss_lin([1.0], [1.0])


@given(
    pred=st.lists(finite_floats, min_size=2, max_size=12),
    shift=finite_floats,
    scale=st.floats(0.1, 50),
)
@settings(max_examples=60, deadline=None)
def test_mono_invariances(pred, shift, scale):
    rng = np.random.default_rng(0)
    gt = rng.normal(size=len(pred))
    base = loss_mono(pred, gt)
    assert base >= 0
    shifted = [p + shift for p in pred]
    assert loss_mono(shifted, gt) == pytest.approx(base, rel=1e-9, abs=1e-9)
    assert loss_mono(pred, gt * scale) == pytest.approx(base, rel=1e-9, abs=1e-9)


def test_fusion_uses_weight():
    pred = [0.5, 0.2]
    gt = [1.0, 2.0]
    assert loss_fusion(pred, gt, mono_weight=0.0)["fusion"] == pytest.approx(1.0)
    assert loss_fusion(pred, gt)["fusion"] == pytest.approx(1.18)  # default 0.3
