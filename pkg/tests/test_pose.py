import math

import numpy as np
import pytest

from ellipose.bench import PoseRunConfig, ground_truth_association, initial_estimate
from ellipose.conics import Camera, Ellipse, Ellipsoid, project_ellipse
from ellipose.errors import InsufficientObjects, MissingSigma, NoValidPose
from ellipose.evaluation import orientation_error_deg, position_error
from ellipose.metrics import DEFAULT_CONTEXT, MetricKind
from ellipose.model import Association, Detection, MapObject, PoseEstimate, SceneMap
from ellipose.pose import (INLIER_IOU, PENALTY, PoseCost, label_consistent_triples, ransac_init, refine,
                           reprojection_overlap)

from oracles import lens_iou_distance


def gt_estimate(frame, scene):
    return PoseEstimate(frame.gt_camera, ground_truth_association(frame, scene))


class TestOverlap:
    def test_perfect_and_away(self, K):
        q = Ellipsoid(np.zeros(3), np.array([0.4, 0.3, 0.2])).dual_quadric()
        cam = Camera(K, np.eye(3), np.array([0.1, 0.0, 3.0]), (640, 480))
        det = project_ellipse(cam, q)
        assert reprojection_overlap(det, cam, q) == pytest.approx(1.0, abs=1e-9)
        behind = Camera(K, np.eye(3), np.array([0.0, 0.0, -3.0]), (640, 480))
        assert reprojection_overlap(det, behind, q) == 0.0

    def test_lens_case(self, K):
        q = Ellipsoid(np.zeros(3), np.full(3, 0.5)).dual_quadric()
        cam = Camera(K, np.eye(3), np.array([0.0, 0.0, 5.0]), (640, 480))
        proj = project_ellipse(cam, q)
        r = proj.a
        det = Ellipse(proj.cx + r, proj.cy, r, r)
        assert reprojection_overlap(det, cam, q) == pytest.approx(1 - lens_iou_distance(1, 1), abs=1e-4)
        assert 1 - lens_iou_distance(1, 1) == pytest.approx(0.24303, abs=5e-5)


class TestRansac:
    def test_noiseless_association(self, noiseless_data):
        scene, frames = noiseless_data
        for f in frames:
            est = ransac_init(f.detections, scene, f.K, f.image_size)
            truth = {(i, d.object_id) for i, d in enumerate(f.detections)}
            assert set(est.inliers.pairs) == truth
            est.inliers.validate(f.detections, scene)
            # P3P on ellipse centers is only approximate, but close
            assert position_error(est.camera, f.gt_camera) < 0.3

    def test_inliers_pass_threshold_at_initial_pose(self, noisy_data):
        scene, frames = noisy_data
        for f in frames[:4]:
            est = ransac_init(f.detections, scene, f.K, f.image_size)
            est.inliers.validate(f.detections, scene)
            assert len(est.inliers) >= 3
            for i, oid in est.inliers.pairs:
                assert reprojection_overlap(f.detections[i].ellipse, est.camera,
                                            scene.get(oid).dual_quadric) >= INLIER_IOU

    def test_decoy_rejected(self, noiseless_data):
        scene, frames = noiseless_data
        f = frames[0]
        # decoy shares a detected label but sits far outside the view
        victim = scene.get(f.detections[0].object_id)
        decoy = MapObject("decoy", victim.label, Ellipsoid(victim.ellipsoid.center + np.array([40.0, 40.0, 0.0]),
                                                          victim.ellipsoid.semi_axes, victim.ellipsoid.rotation))
        scene2 = SceneMap(tuple(scene) + (decoy,))
        est = ransac_init(f.detections, scene2, f.K, f.image_size)
        assert "decoy" not in est.inliers.object_ids
        assert (0, victim.id) in est.inliers.pairs

    def test_two_detections(self, noiseless_data):
        scene, frames = noiseless_data
        f = frames[0]
        with pytest.raises(InsufficientObjects):
            ransac_init(f.detections[:2], scene, f.K, f.image_size)

    def test_no_valid_pose(self, noiseless_data):
        scene, frames = noiseless_data
        f = frames[0]
        # needle-thin detections cannot overlap any projected ellipsoid by 20%
        junk = tuple(Detection(d.label, Ellipse(d.ellipse.cx, d.ellipse.cy, 300, 0.5, 0.3 * i))
                     for i, d in enumerate(f.detections))
        with pytest.raises(NoValidPose):
            ransac_init(junk, scene, f.K, f.image_size)

    def test_deterministic(self, noisy_data):
        scene, frames = noisy_data
        f = frames[1]
        a = ransac_init(f.detections, scene, f.K, f.image_size, seed=4)
        b = ransac_init(f.detections, scene, f.K, f.image_size, seed=4)
        np.testing.assert_array_equal(a.camera.R, b.camera.R)
        assert a.inliers == b.inliers

    def test_triple_enumeration(self, noiseless_data):
        scene, frames = noiseless_data
        dets = frames[0].detections
        triples = label_consistent_triples(dets, scene)
        for tri, objs in triples:
            assert len(set(objs)) == 3
            for i, o in zip(tri, objs):
                assert dets[i].label == scene.get(o).label
        capped = label_consistent_triples(dets, scene, max_triples=3, rng=np.random.default_rng(0))
        assert len(capped) <= 3 or len(triples) <= 3


class TestRefine:
    def test_truth_is_fixed_point(self, noiseless_data):
        scene, frames = noiseless_data
        f = frames[0]
        est = refine(gt_estimate(f, scene), f.detections, scene, MetricKind.LEVEL_SET)
        assert position_error(est.camera, f.gt_camera) < 1e-6
        assert orientation_error_deg(est.camera.R, f.gt_camera.R) < 1e-6
        assert est.final_cost < 1e-12

    @pytest.mark.parametrize("kind", [k for k in MetricKind])
    def test_every_metric_shares_the_truth(self, kind, noiseless_data):
        scene, frames = noiseless_data
        f = frames[1]
        est = refine(gt_estimate(f, scene), f.detections, scene, kind)
        assert position_error(est.camera, f.gt_camera) < 1e-5

    def test_recovers_from_small_perturbation(self, noiseless_data):
        scene, frames = noiseless_data
        f = frames[2]
        cfg = PoseRunConfig(init="truth", init_pos_noise=0.05, init_rot_noise_deg=2.0)
        init = initial_estimate(f, scene, cfg, 0)
        est = refine(init, f.detections, scene, MetricKind.LEVEL_SET)
        assert position_error(est.camera, f.gt_camera) < 1e-4
        assert est.final_cost <= est.initial_cost

    def test_cost_never_increases(self, noisy_data):
        scene, frames = noisy_data
        for f in frames[:4]:
            init = ransac_init(f.detections, scene, f.K, f.image_size)
            for kind in (MetricKind.LEVEL_SET, MetricKind.WASSERSTEIN):
                est = refine(init, f.detections, scene, kind)
                assert est.final_cost <= est.initial_cost
                assert est.refined and est.termination

    def test_missing_sigma(self, noiseless_data):
        scene, frames = noiseless_data
        f = frames[0]
        dets = tuple(Detection(d.label, d.ellipse, object_id=d.object_id) for d in f.detections)
        with pytest.raises(MissingSigma):
            refine(gt_estimate(f, scene), dets, scene, MetricKind.LEVEL_SET, use_uncertainty=True)

    def test_sigma_scale_invariance(self, noisy_data):
        scene, frames = noisy_data
        f = frames[3]
        init = PoseEstimate(f.gt_camera, ground_truth_association(f, scene))
        a = refine(init, f.detections, scene, MetricKind.WASSERSTEIN, use_uncertainty=True)
        scaled = tuple(Detection(d.label, d.ellipse, sigma=d.sigma * 7.0, object_id=d.object_id,
                                 truncated=d.truncated) for d in f.detections)
        b = refine(init, scaled, scene, MetricKind.WASSERSTEIN, use_uncertainty=True)
        assert position_error(a.camera, b.camera) < 1e-4
        assert orientation_error_deg(a.camera.R, b.camera.R) < 1e-3

    def test_two_pairs_warns(self, noiseless_data):
        scene, frames = noiseless_data
        f = frames[0]
        init = PoseEstimate(f.gt_camera, Association(ground_truth_association(f, scene).pairs[:2]))
        with pytest.warns(RuntimeWarning):
            est = refine(init, f.detections, scene, MetricKind.LEVEL_SET)
        assert est.underconstrained
        with pytest.raises(InsufficientObjects):
            refine(PoseEstimate(f.gt_camera, Association(init.inliers.pairs[:1])), f.detections, scene)

    def test_degenerate_projection_penalized(self, noiseless_data):
        scene, frames = noiseless_data
        f = frames[0]
        pairs = ground_truth_association(f, scene).pairs
        oid = pairs[0][1]
        # put the camera at the center of the first associated object
        center = scene.get(oid).ellipsoid.center
        cam = f.gt_camera.with_pose(f.gt_camera.R, -f.gt_camera.R @ center)
        cost = PoseCost(cam, pairs, f.detections, scene, MetricKind.LEVEL_SET, DEFAULT_CONTEXT)
        assert cost.residuals(np.zeros(6))[0] is None
        assert PENALTY <= cost(np.zeros(6)) < math.inf

    def test_weighted_and_unweighted_forms(self, noisy_data):
        scene, frames = noisy_data
        f = frames[0]
        pairs = ground_truth_association(f, scene).pairs
        cam = f.gt_camera
        plain = PoseCost(cam, pairs, f.detections, scene, MetricKind.WASSERSTEIN, DEFAULT_CONTEXT)
        weighted = PoseCost(cam, pairs, f.detections, scene, MetricKind.WASSERSTEIN, DEFAULT_CONTEXT, True)
        r = plain.residuals(np.zeros(6))
        sig = [f.detections[i].sigma for i, _ in pairs]
        assert plain(np.zeros(6)) == pytest.approx(sum(d * d for d in r))
        assert weighted(np.zeros(6)) == pytest.approx(sum(d / s for d, s in zip(r, sig)))
