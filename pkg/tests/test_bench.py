import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from csot import bench
from csot.bench import (LengthMismatch, SynthSpec, center_errors, distance_precision, evaluate,
                        iou, overlap_precision, precision_curve, read_boxes, success_auc,
                        synth_sequence, write_boxes, write_report)

box = st.tuples(st.floats(-50, 50), st.floats(-50, 50), st.floats(0, 40), st.floats(0, 40))


def _random_traj(rng, n=50):
    gt = np.column_stack([rng.uniform(0, 200, (n, 2)), rng.uniform(10, 60, (n, 2))])
    traj = gt.copy()
    traj[:, :2] += rng.normal(0, 8, (n, 2))
    traj[:, 2:] *= rng.uniform(0.7, 1.3, (n, 2))
    return traj, gt


def _with_center_offsets(offsets):
    gt = np.tile([0.0, 0.0, 10.0, 10.0], (len(offsets), 1))
    traj = gt.copy()
    traj[:, 0] += offsets
    return traj, gt


# overlap

def test_iou_examples():
    assert iou((1, 2, 5, 6), (1, 2, 5, 6)) == 1.0
    assert iou((0, 0, 1, 1), (5, 5, 1, 1)) == 0.0
    assert iou((0, 0, 10, 10), (5, 0, 10, 10)) == pytest.approx(1 / 3)
    assert iou((0, 0, 0, 0), (0, 0, 0, 0)) == 0.0


@settings(max_examples=100, deadline=None)
@given(box, box)
def test_iou_symmetric_and_bounded(a, b):
    v = iou(a, b)
    assert v == iou(b, a)
    assert 0.0 <= v <= 1.0 + 1e-12


# precision measures

def test_distance_precision_examples():
    traj, gt = _with_center_offsets([5.0, 25.0, 10.0])
    assert distance_precision(traj, traj) == 1.0
    assert distance_precision(traj, gt) == pytest.approx(2 / 3)
    assert distance_precision(traj, gt, 0.0) == 0.0
    assert distance_precision(gt, gt, 0.0) == 0.0  # strict, even for exact matches


def test_overlap_precision_examples():
    gt = np.tile([0.0, 0.0, 10.0, 10.0], (3, 1))
    # IoU 0.6, 0.4 and exactly 0.5 via horizontal shifts
    shifts = [10 * (1 - 0.6) / 1.6, 10 * (1 - 0.4) / 1.4, 10 / 3]
    traj = gt.copy()
    traj[:, 0] += shifts
    np.testing.assert_allclose(iou(traj, gt), [0.6, 0.4, 0.5])
    assert overlap_precision(traj, gt) == pytest.approx(1 / 3)
    assert overlap_precision(gt, gt) == 1.0
    far = gt + [100, 0, 0, 0]
    assert overlap_precision(far, gt) == 0.0


def test_length_mismatch():
    a = np.zeros((3, 4))
    with pytest.raises(LengthMismatch):
        center_errors(a, np.zeros((2, 4)))
    with pytest.raises(LengthMismatch):
        success_auc(a, np.zeros((4, 4)))


def test_success_perfect_and_half():
    gt = np.tile([0.0, 0.0, 10.0, 10.0], (4, 1))
    auc, curve = success_auc(gt, gt)
    assert curve.shape == (101, 2)
    assert np.all(curve[:-1, 1] == 1) and curve[-1, 1] == 0
    assert 0.99 <= auc <= 1.0
    traj = gt + [10 / 3, 0, 0, 0]
    auc, curve = success_auc(traj, gt)
    t = curve[:, 0]
    assert np.all(curve[t < 0.5 - 1e-9, 1] == 1) and np.all(curve[t > 0.5 + 1e-9, 1] == 0)
    assert auc == pytest.approx(0.5, abs=0.01)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_curves_monotone_and_auc_identity(seed):
    traj, gt = _random_traj(np.random.default_rng(seed))
    auc, curve = success_auc(traj, gt)
    assert np.all(np.diff(curve[:, 1]) <= 0)
    assert np.all(np.diff(precision_curve(traj, gt)[:, 1]) >= 0)
    assert abs(auc - np.mean(iou(traj, gt))) <= 0.01


def test_evaluate_report(rng):
    traj, gt = _random_traj(rng)
    rep = evaluate(traj, gt, fps=12.5)
    for v in (rep.dp20, rep.op50, rep.auc):
        assert 0 <= v <= 1
    assert rep.frames == 50 and rep.mean_fps == 12.5
    assert rep.summary()["auc"] == rep.auc


# files

def test_box_file_round_trip(tmp_path, rng):
    boxes = rng.uniform(0, 100, (7, 4))
    write_boxes(tmp_path / "b.txt", boxes)
    lines = (tmp_path / "b.txt").read_text().splitlines()
    assert len(lines) == 7
    np.testing.assert_allclose(read_boxes(tmp_path / "b.txt"), boxes, atol=1e-3)


def test_box_file_one_based(tmp_path):
    (tmp_path / "gt.txt").write_text("1,1,10,20\n5\t6\t7\t8\n")
    np.testing.assert_allclose(read_boxes(tmp_path / "gt.txt"), [[0, 0, 10, 20], [4, 5, 7, 8]])


def test_report_files(tmp_path, rng):
    traj, gt = _random_traj(rng, 10)
    write_report(evaluate(traj, gt), tmp_path, figures=True)
    names = {p.name for p in tmp_path.iterdir()}
    assert {"metrics.txt", "success.csv", "precision.csv"} <= names
    assert any(n.endswith(".png") for n in names)
    rows = (tmp_path / "success.csv").read_text().splitlines()
    assert len([r for r in rows if r and r[0].isdigit()]) == 101


# synthetic sequences

def test_synth_static():
    frames, gt = synth_sequence(SynthSpec(frames=3, velocity=(0, 0), noise=0.0), 4)
    assert np.all(gt == gt[0])
    assert all(np.array_equal(f, frames[0]) for f in frames)


def test_synth_translation_is_arithmetic():
    _, gt = synth_sequence(SynthSpec(frames=10, velocity=(3.0, -2.0)), 0)
    c = bench.centers(gt)
    np.testing.assert_allclose(np.diff(c, axis=0), np.tile([3.0, -2.0], (9, 1)), atol=1e-12)


def test_synth_deterministic():
    a, ga = synth_sequence(SynthSpec(frames=4), 11)
    b, gb = synth_sequence(SynthSpec(frames=4), 11)
    assert all(x.tobytes() == y.tobytes() for x, y in zip(a, b))
    np.testing.assert_array_equal(ga, gb)
    c, _ = synth_sequence(SynthSpec(frames=4), 12)
    assert a[0].tobytes() != c[0].tobytes()


def test_synth_scale_and_defaults():
    spec = SynthSpec()
    assert spec.frames == 100
    gt = SynthSpec(frames=3, scale_rate=1.1).ground_truth()
    np.testing.assert_allclose(gt[2, 2:], np.array(spec.box[2:]) * 1.21)
    with pytest.raises(ValueError):
        synth_sequence(SynthSpec(frames=0))


def test_sequence_round_trip(tmp_path):
    frames, gt = synth_sequence(SynthSpec(frames=3), 2)
    bench.write_sequence(tmp_path, frames, gt)
    back = bench.read_frames(tmp_path)
    assert all(np.array_equal(a, b) for a, b in zip(frames, back))
    np.testing.assert_allclose(read_boxes(tmp_path / "groundtruth_rect.txt"), gt, atol=1e-3)
