import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from deforest_seg.losses import LossConfig, bce_loss, combined_loss, dice_loss
from deforest_seg.metrics import Confusion, MetricsReport, evaluate, evaluate_many

from oracles import count_confusion

probs = arrays(np.float64, st.integers(1, 40), elements=st.floats(0, 1))


@st.composite
def pred_target(draw):
    p = draw(probs)
    t = draw(arrays(np.uint8, p.shape, elements=st.integers(0, 1)))
    return p, t


def test_bce_at_half_is_ln2():
    t = np.array([1, 0, 1, 1], dtype=float)
    assert bce_loss(np.full(4, 0.5), t).item() == pytest.approx(math.log(2), abs=1e-12)


def test_bce_hand_example():
    out = bce_loss(np.array([0.9, 0.2]), np.array([1.0, 0.0])).item()
    assert out == pytest.approx((-math.log(0.9) - math.log(0.8)) / 2, abs=1e-12)


def test_bce_perfect_prediction_near_zero():
    t = np.array([0.0, 1.0, 1.0, 0.0])
    assert 0 <= bce_loss(t, t).item() <= -math.log(1 - 1e-7) + 1e-15


def test_dice_examples():
    ones, zeros = np.ones(4), np.zeros(4)
    assert dice_loss(ones, ones).item() == 0.0
    assert dice_loss(zeros, ones).item() == pytest.approx(0.8, abs=1e-12)
    assert dice_loss(zeros, zeros).item() == 0.0


def test_combined_hand_value():
    out = combined_loss(np.full(4, 0.5), np.ones(4)).item()
    # dice: 1 - (2 * 2 + 1) / (2 + 4 + 1) = 2/7
    assert out == pytest.approx(0.5 * math.log(2) + 0.5 * (1 - 5 / 7), abs=1e-12)


def test_combined_weight_zeroing(rng):
    p, t = rng.random(16), (rng.random(16) > 0.5).astype(float)
    cfg = LossConfig(dice_weight=0.0)
    assert combined_loss(p, t, cfg).item() == pytest.approx(0.5 * bce_loss(p, t).item(), abs=1e-15)


def test_combined_perfect_prediction():
    t = np.array([[0.0, 1.0], [1.0, 1.0]])
    assert combined_loss(t, t).item() <= 1e-6


def test_loss_shape_mismatch():
    with pytest.raises(ValueError, match="does not match"):
        bce_loss(np.ones(3), np.ones(4))
    with pytest.raises(ValueError):
        dice_loss(np.ones((2, 2)), np.ones(4))


def test_loss_config_validation():
    with pytest.raises(ValueError):
        LossConfig(bce_weight=0, dice_weight=0)
    with pytest.raises(ValueError):
        LossConfig(dice_smooth=0)


def test_loss_is_differentiable():
    p = torch.tensor([0.3, 0.8], dtype=torch.float64, requires_grad=True)
    combined_loss(p, torch.tensor([0.0, 1.0], dtype=torch.float64)).backward()
    assert torch.isfinite(p.grad).all() and p.grad[0] > 0 and p.grad[1] < 0


@settings(max_examples=300, deadline=None)
@given(pred_target())
def test_loss_ranges(pt):
    p, t = pt
    assert combined_loss(p, t).item() >= 0
    d = dice_loss(p, t).item()
    assert 0 <= d < 1


@settings(max_examples=300, deadline=None)
@given(pred_target())
def test_bce_relabel_symmetry(pt):
    p, t = pt
    a = bce_loss(p, t).item()
    b = bce_loss(1 - p, 1 - t).item()
    assert a == pytest.approx(b, rel=1e-9, abs=1e-12)


def test_evaluate_identity(rng):
    t = (rng.random((16, 16)) > 0.5).astype(np.uint8)
    r = evaluate(t, t)
    assert (r.pixel_accuracy, r.f1, r.iou) == (1.0, 1.0, 1.0)


def test_evaluate_hand_confusion():
    pred = np.array([[1, 1, 1, 0], [0, 0, 0, 0]])
    truth = np.array([[1, 1, 0, 1], [0, 0, 0, 0]])
    r = evaluate(pred, truth)
    assert r.confusion == Confusion(tp=2, fp=1, fn=1, tn=4)
    assert r.pixel_accuracy == 0.75
    assert r.f1 == pytest.approx(2 / 3, abs=1e-12)
    assert r.iou == 0.5


def test_evaluate_empty_convention():
    z = np.zeros((4, 4), dtype=np.uint8)
    r = evaluate(z, z)
    assert (r.pixel_accuracy, r.f1, r.iou) == (1.0, 1.0, 1.0)


def test_evaluate_rejects_non_binary():
    with pytest.raises(ValueError, match="binary"):
        evaluate(np.array([0, 2]), np.array([0, 1]))


def test_evaluate_matches_brute_force(rng):
    for _ in range(500):
        p = rng.random((16, 16)) < rng.random()
        t = rng.random((16, 16)) < rng.random()
        r = evaluate(p, t)
        assert (r.confusion.tp, r.confusion.fp, r.confusion.fn, r.confusion.tn) == count_confusion(p, t)
        assert abs(r.f1 - 2 * r.iou / (1 + r.iou)) <= 1e-12
        assert r.iou <= r.f1


def test_micro_pools_counts_and_macro_averages():
    a = (np.array([1, 1, 0, 0]), np.array([1, 0, 0, 0]))
    b = (np.array([0, 0, 0, 0]), np.array([1, 1, 1, 1]))
    micro = evaluate_many([a, b])
    assert micro.confusion == Confusion(tp=1, fp=1, fn=4, tn=2)
    assert micro.pixel_accuracy == 3 / 8
    macro = evaluate_many([a, b], average="macro")
    assert macro.pixel_accuracy == pytest.approx((0.75 + 0.0) / 2)
    assert macro.iou == pytest.approx((0.5 + 0.0) / 2)


def test_report_text_round_trip():
    r = evaluate(np.array([1, 1, 1, 0, 0, 0, 0, 0]), np.array([1, 1, 0, 1, 0, 0, 0, 0]))
    text = r.to_text()
    assert text.splitlines()[:3] == ["pixel_accuracy=0.7500", "f1=0.6667", "iou=0.5000"]
    back = MetricsReport.from_text(text)
    assert back.confusion == r.confusion and back.f1 == 0.6667
