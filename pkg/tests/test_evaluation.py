import numpy as np
import pytest

from graspclutter.evaluation import (
    SuccessCoverageCurve,
    VariantCounts,
    auc,
    bootstrap_auc_difference,
    coverage,
    covered_by_threshold,
    curve_sweep,
    threshold_counts,
)
from graspclutter.geometry import Pose, pairwise_grasp_distance


def random_poses(rng, n, spread=0.05):
    return [Pose.from_translation(rng.uniform(-spread, spread, 3)) for _ in range(n)]


def test_coverage_examples(gripper, rng):
    ref = random_poses(rng, 10)
    assert coverage(ref, ref, gripper) == 1.0
    assert coverage([], ref, gripper) == 0.0
    shifted = [Pose.from_translation(p.translation + [0.01, 0, 0]) for p in ref]
    assert coverage(shifted, ref, gripper) == 1.0
    far = [Pose.from_translation(p.translation + [0.03, 0, 0]) for p in ref[:1]]
    assert coverage(far, ref[:1], gripper) == 0.0
    with pytest.raises(ValueError):
        coverage(ref, [], gripper)


def test_auc_examples():
    assert auc([(0.0, 1.0), (1.0, 0.0)]) == pytest.approx(0.5)
    assert auc([(1.0, 1.0)]) == pytest.approx(1.0)
    assert auc([(0.5, 0.4)]) == pytest.approx(0.2)
    # repeated coverage keeps the better success rate
    assert auc([(0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        auc([])


def test_sweep_is_monotone_in_coverage(gripper):
    for seed in range(100):
        rng = np.random.default_rng(seed)
        grasps = random_poses(rng, 15)
        ref = random_poses(rng, 8)
        scores = rng.uniform(size=15)
        dist = pairwise_grasp_distance(grasps, ref, gripper)
        thresholds = np.unique(scores)[::-1]
        cov, _, att = threshold_counts(scores, np.ones(15, bool), covered_by_threshold(scores, dist), thresholds)
        assert np.all(np.diff(cov) >= 0) and np.all(np.diff(att) > 0)
        curve = curve_sweep(list(zip(grasps, scores)), ref, None, 1, gripper, success=np.ones(15, bool))
        assert np.all(np.diff(curve.coverages) > 0)
        assert curve.coverages[-1] == pytest.approx(coverage(grasps, ref, gripper))


def test_perfect_scorer_beats_random(gripper, rng):
    grasps = random_poses(rng, 40)
    success = rng.uniform(size=40) < 0.5
    ref = [g for g, s in zip(grasps, success) if s]
    perfect = curve_sweep(list(zip(grasps, success.astype(float) + rng.uniform(0, 0.1, 40))), ref, None, 1, gripper, success=success)
    noisy = curve_sweep(list(zip(grasps, rng.uniform(size=40))), ref, None, 1, gripper, success=success)
    assert perfect.auc > noisy.auc
    assert perfect.points[0][1] == 1.0


def test_bootstrap_detects_consistent_gap():
    rng = np.random.default_rng(0)
    thresholds = np.array([0.9, 0.5, 0.1])
    good, bad = VariantCounts(), VariantCounts()
    for _ in range(20):
        good.add([2, 4, 6], [2, 4, 5], [2, 5, 8])
        bad.add([1, 2, 6], [1, 1, 2], [3, 6, 8])
    cmp = bootstrap_auc_difference(good, bad, np.full(20, 6), thresholds, ("good", "bad"), rng, 200)
    assert cmp.auc_difference > 0 and cmp.significant
    same = bootstrap_auc_difference(good, good, np.full(20, 6), thresholds, ("a", "b"), rng, 50)
    assert same.auc_difference == 0.0 and not same.significant
    assert set(cmp.to_dict()) == {"better", "worse", "auc_difference", "ci95", "n_bootstrap", "significant"}


def test_curve_to_dict():
    c = SuccessCoverageCurve(((0.5, 1.0), (1.0, 0.5)))
    assert c.to_dict() == {"points": [[0.5, 1.0], [1.0, 0.5]], "auc": pytest.approx(0.875)}
