import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from conftest import tiny_config, tiny_samples
from mmovseg.config import ValidationError
from mmovseg.evaluation import (
    REFERENCE_MEAN_MIOU,
    REFERENCE_SETTING_MIOU,
    ConfusionMatrix,
    IoUReport,
    ablation_grid,
    compute_iou,
    emit_report,
    evaluate_samples,
    is_close_report,
    load_report,
    make_report,
    predict,
    reference_table,
    variant_config,
)
from mmovseg.model import MMOVSeg
from mmovseg.vocab import ClassVocabulary, resolve_vocabulary


def test_two_class_worked_example():
    gt = np.array([[0, 0, 1, 1]])
    pred = np.array([[0, 1, 1, 1]])
    cm = ConfusionMatrix(2).update(pred, gt)
    assert cm.counts.tolist() == [[1, 1], [0, 2]]
    ious, miou = compute_iou(cm)
    assert ious == [0.5, 2 / 3] and miou == pytest.approx(7 / 12)


def test_ignore_and_absent_class():
    gt = np.array([0, 255, 0, 1])
    pred = np.array([0, 2, 0, 1])
    ious, miou = compute_iou(ConfusionMatrix(3).update(pred, gt))
    assert ious == [1.0, 1.0, None] and miou == 1.0


def test_false_positive_on_absent_class_counts():
    ious, _ = compute_iou(ConfusionMatrix(3).update(np.array([2, 0]), np.array([0, 0])))
    assert ious == [0.5, None, 0.0]


def test_errors():
    with pytest.raises(ValidationError, match="shapes differ"):
        ConfusionMatrix(2).update(np.zeros(3), np.zeros(4))
    with pytest.raises(ValidationError, match="label index"):
        ConfusionMatrix(2).update(np.zeros(1), np.array([5]))
    with pytest.raises(ValidationError, match="undefined"):
        compute_iou(ConfusionMatrix(2))


def test_merge_equals_joint_update(rng):
    gt, pred = rng.integers(0, 4, 100), rng.integers(0, 4, 100)
    a = ConfusionMatrix(4).update(pred[:40], gt[:40]).merge(ConfusionMatrix(4).update(pred[40:], gt[40:]))
    assert np.array_equal(a.counts, ConfusionMatrix(4).update(pred, gt).counts) and a.total == 100


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(np.int64, st.integers(1, 60), elements=st.integers(0, 3)), st.integers(0, 2**31 - 1),
       st.permutations(range(4)))
def test_relabelling_permutes_ious(gt, seed, perm):
    pred = np.random.default_rng(seed).integers(0, 4, gt.shape)
    ious, miou = compute_iou(ConfusionMatrix(4).update(pred, gt))
    p = np.array(perm)
    ious2, miou2 = compute_iou(ConfusionMatrix(4).update(p[pred], p[gt]))
    assert [ious2[p[c]] for c in range(4)] == ious
    assert miou2 == pytest.approx(miou, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(np.int64, st.integers(1, 60), elements=st.integers(0, 4)), st.integers(0, 2**31 - 1))
def test_seen_unseen_recompose_mean(gt, seed):
    vocab = ClassVocabulary(tuple("ABCDE"), (True, True, True, False, False))
    pred = np.random.default_rng(seed).integers(0, 5, gt.shape)
    r = make_report(ConfusionMatrix(5).update(pred, gt), vocab, "s")
    parts = [(m, sum(v is not None for v, s in zip(r.iou, r.seen) if s == flag))
             for m, flag in ((r.seen_mean, True), (r.unseen_mean, False))]
    total = sum(m * n for m, n in parts if m is not None)
    assert r.miou == pytest.approx(total / sum(n for _, n in parts), abs=1e-12)


def test_predict_ties_lowest_index():
    logits = torch.zeros(1, 3, 1, 2)
    logits[0, 2, 0, 1] = 1.0
    assert predict(logits).tolist() == [[[0, 2]]]


def _report(setting="a|b"):
    return IoUReport(setting, ("A", "B", "C"), (True, True, False), (0.5, None, 0.25), 0.375, 0.5, 0.25)


def test_emit_load_round_trip(tmp_path):
    reports = [_report(), _report("toy")]
    paths = emit_report(reports, tmp_path)
    assert [p.name for p in paths] == ["per_class.csv", "summary.csv", "iou_a_b.svg", "iou_toy.svg"]
    back = load_report(tmp_path)
    assert all(is_close_report(a, b) for a, b in zip(reports, back))
    assert "a|b,B,1,n/a" in (tmp_path / "per_class.csv").read_text()
    svg = (tmp_path / "iou_toy.svg").read_text()
    assert svg.count("#3b6ea5") >= 2 and svg.count("#d9822b") >= 1


def test_emit_deterministic_bytes(tmp_path):
    emit_report([_report()], tmp_path / "a")
    emit_report([_report()], tmp_path / "b")
    for name in ("per_class.csv", "summary.csv", "iou_a_b.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_reference_table():
    rows = reference_table()
    assert rows[-1] == ("mean", REFERENCE_MEAN_MIOU)
    assert np.mean(list(REFERENCE_SETTING_MIOU.values())) == pytest.approx(REFERENCE_MEAN_MIOU, abs=0.05)


def test_grid_loss_axis_has_three_rows():
    rows = ablation_grid(tiny_config(), variants=("full",), losses=["infonce", "mse", "l1"])
    assert [(r["loss"], r["target"]) for r in rows] == [("infonce", "dense"), ("mse", "dense"), ("l1", "dense")]
    assert [r["config"].cmu_loss for r in rows] == ["infonce", "mse", "l1"]


def test_grid_default_component_rows():
    rows = ablation_grid(tiny_config(), losses=["infonce", "mse"])
    tags = [(r["variant"], r["loss"], r["target"]) for r in rows]
    assert tags == [("full", "infonce", "dense"), ("full", "mse", "dense"),
                    ("w/o CMU", "-", "none"), ("w/o CMU&DEF", "-", "none")]


def test_grid_target_axis():
    rows = ablation_grid(tiny_config(), variants=("full",), targets=["global", "dense", "both"])
    assert [r["config"].cmu_target for r in rows] == ["global", "dense", "both"]


def test_variant_configs():
    assert variant_config(tiny_config(), "w/o CMU&DEF").fusion == "rgb_only"
    with pytest.raises(ValidationError, match="unknown variant"):
        variant_config(tiny_config(), "nope")


def test_evaluate_samples_counts_every_labelled_pixel():
    cfg = tiny_config()
    samples = tiny_samples(3)
    vocab = resolve_vocabulary(cfg)
    r = evaluate_samples(MMOVSeg(cfg), samples, vocab, batch_size=2)
    assert r.classes == vocab.names and 0.0 <= r.miou <= 1.0
    with pytest.raises(ValidationError, match="empty"):
        evaluate_samples(MMOVSeg(cfg), [], vocab)
