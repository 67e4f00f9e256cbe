import json
import math

import numpy as np
import pytest
from scipy import stats

from ellipose.conics import Camera, project_ellipse
from ellipose.errors import PlacementFailure
from ellipose.evaluation import orientation_error_deg, position_error
from ellipose.io import atomic_writer
from ellipose.metrics import level_set_distance
from ellipose.model import Association, PoseEstimate
from ellipose.optim import rotation_log
from ellipose.scene import (SynthConfig, estimate_from_dict, frame_from_dict, frame_to_dict, load_config,
                            load_estimates, load_frames, load_scene, look_at, perturb_pose, place_objects,
                            save_estimates, save_frames, save_scene, synth_generate, truncated_detection,
                            write_dataset)


def frames_equal(a, b):
    assert a.frame_id == b.frame_id and a.image_size == b.image_size
    np.testing.assert_array_equal(a.K, b.K)
    assert a.detections == b.detections
    np.testing.assert_array_equal(a.gt_camera.R, b.gt_camera.R)
    np.testing.assert_array_equal(a.gt_camera.t, b.gt_camera.t)


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            SynthConfig(seed=None)
        with pytest.raises(ValueError):
            SynthConfig(seed=0, partial_visibility_rate=1.5)
        with pytest.raises(ValueError):
            SynthConfig(seed=0, noise_model="gaussian")
        with pytest.raises(ValueError):
            SynthConfig.from_dict({"seed": 0, "n_object": 3})

    def test_round_trip(self, tmp_path):
        cfg = SynthConfig(seed=5, n_frames=3, center_jitter_px=1.5)
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg.to_dict()))
        assert load_config(path) == cfg

    def test_intrinsics(self):
        K = SynthConfig(seed=0, focal=500.0, image_size=(640, 480)).K
        np.testing.assert_array_equal(K, [[500, 0, 320], [0, 500, 240], [0, 0, 1]])


class TestGeneration:
    def test_placement_no_overlap(self):
        cfg = SynthConfig(seed=3, n_objects=12)
        scene = place_objects(cfg, np.random.default_rng(3))
        objs = list(scene)
        assert len(objs) == 12
        for i in range(len(objs)):
            for j in range(i + 1, len(objs)):
                a, b = objs[i].ellipsoid, objs[j].ellipsoid
                assert np.linalg.norm(a.center - b.center) >= a.semi_axes.max() + b.semi_axes.max()

    def test_placement_failure(self):
        with pytest.raises(PlacementFailure):
            place_objects(SynthConfig(seed=0, n_objects=50, volume=(0.5, 0.5, 0.2)), np.random.default_rng(0))

    def test_zero_noise_exact(self, noiseless_data):
        scene, frames = noiseless_data
        for f in frames:
            for d in f.detections:
                proj = project_ellipse(f.gt_camera, scene.get(d.object_id).dual_quadric)
                assert d.ellipse == proj
                assert d.sigma == pytest.approx(1.0, abs=1e-3)

    def test_deterministic_files(self, tmp_path):
        cfg = SynthConfig(seed=9, n_frames=4)
        a = write_dataset(tmp_path / "a", *synth_generate(cfg))
        b = write_dataset(tmp_path / "b", *synth_generate(cfg))
        for pa, pb in zip(a, b):
            assert pa.read_bytes() == pb.read_bytes()

    def test_frame_invariants(self, noisy_data):
        scene, frames = noisy_data
        for f in frames:
            w, h = f.image_size
            assert len(f.detections) >= 4
            for d in f.detections:
                assert -0.5 * w <= d.ellipse.cx <= 1.5 * w and -0.5 * h <= d.ellipse.cy <= 1.5 * h
                assert d.label == scene.get(d.object_id).label

    def test_truncation_rate(self):
        cfg = SynthConfig(seed=31, n_frames=1000, partial_visibility_rate=0.3, n_objects=6)
        _, frames = synth_generate(cfg)
        rate = np.mean([f.n_truncated >= 1 for f in frames])
        assert abs(rate - 0.3) <= 0.03

    def test_truncated_detection_is_inscribed(self):
        from ellipose.conics import Ellipse, clip_conic_to_image, ellipse_bbox
        proj = Ellipse(10, 200, 50, 30, 0.4)
        det = truncated_detection(proj, (640, 480))
        np.testing.assert_allclose(ellipse_bbox(det), clip_conic_to_image(proj, (640, 480)), atol=1e-9)
        assert ellipse_bbox(det)[0] == pytest.approx(0.0, abs=1e-9)
        assert det.theta in (0.0, math.pi / 2)

    def test_sigma_tracks_damage(self):
        scene, frames = synth_generate(SynthConfig(seed=1, n_frames=60))
        sig, res = [], []
        for f in frames:
            for d in f.detections:
                proj = project_ellipse(f.gt_camera, scene.get(d.object_id).dual_quadric)
                sig.append(d.sigma)
                res.append(level_set_distance(d.ellipse, proj))
        assert stats.spearmanr(sig, res).statistic > 0.8

    def test_look_at(self):
        R, t = look_at([3.0, 0.0, 1.0], [0.0, 0.0, 1.0])
        cam = Camera(np.eye(3), R, t)
        np.testing.assert_allclose(cam.position, [3, 0, 1], atol=1e-12)
        # the target lands on the optical axis
        np.testing.assert_allclose(R @ np.array([0.0, 0.0, 1.0]) + t, [0, 0, 3], atol=1e-12)


class TestPerturb:
    @pytest.fixture
    def cam(self, K):
        R, t = look_at([2.0, 1.0, 1.5], [0.0, 0.0, 0.5])
        return Camera(K, R, t, (640, 480))

    def test_zero(self, cam, rng):
        p = perturb_pose(cam, 0.0, 0.0, rng)
        np.testing.assert_allclose(p.R, cam.R, atol=1e-15)
        np.testing.assert_allclose(p.t, cam.t, atol=1e-15)

    def test_exact_magnitudes(self, cam, rng):
        for _ in range(50):
            p = perturb_pose(cam, 0.1, 0.0, rng)
            assert position_error(p, cam) == pytest.approx(0.1, abs=1e-12)
            assert orientation_error_deg(p.R, cam.R) < 1e-9
            q = perturb_pose(cam, 0.3, 15.0, rng)
            assert position_error(q, cam) == pytest.approx(0.3, abs=1e-12)
            assert orientation_error_deg(q.R, cam.R) == pytest.approx(15.0, abs=1e-9)

    def test_isotropic_axes(self, K):
        rng = np.random.default_rng(0)
        cam = Camera(K, np.eye(3), np.zeros(3))
        octants = np.zeros(8)
        offsets = np.zeros(8)
        for _ in range(10_000):
            p = perturb_pose(cam, 1.0, 30.0, rng)
            axis = rotation_log(cam.R.T @ p.R)
            octants[int((axis > 0) @ [4, 2, 1])] += 1
            offsets[int((p.position > 0) @ [4, 2, 1])] += 1
        assert stats.chisquare(octants).pvalue > 0.01
        assert stats.chisquare(offsets).pvalue > 0.01

    def test_negative(self, cam, rng):
        with pytest.raises(ValueError):
            perturb_pose(cam, -0.1, 0.0, rng)


class TestFiles:
    def test_scene_round_trip(self, tmp_path, noisy_data):
        scene, _ = noisy_data
        save_scene(tmp_path / "s.json", scene)
        back = load_scene(tmp_path / "s.json")
        for a, b in zip(scene, back):
            assert (a.id, a.label) == (b.id, b.label)
            np.testing.assert_array_equal(a.ellipsoid.center, b.ellipsoid.center)
            np.testing.assert_array_equal(a.ellipsoid.semi_axes, b.ellipsoid.semi_axes)
            np.testing.assert_array_equal(a.ellipsoid.rotation, b.ellipsoid.rotation)

    def test_frames_round_trip(self, tmp_path, noisy_data):
        _, frames = noisy_data
        save_frames(tmp_path / "f.json", frames)
        for a, b in zip(frames, load_frames(tmp_path / "f.json")):
            frames_equal(a, b)

    def test_frame_schema(self, noisy_data):
        d = frame_to_dict(noisy_data[1][0])
        assert set(d) == {"id", "K", "image_size", "detections", "gt_pose"}
        assert len(d["K"]) == 9 and len(d["gt_pose"]["R"]) == 9 and len(d["gt_pose"]["t"]) == 3
        assert set(d["detections"][0]["ellipse"]) == {"cx", "cy", "ax", "ay", "theta"}
        frames_equal(frame_from_dict(d), noisy_data[1][0])

    def test_minimal_frame(self):
        f = frame_from_dict({"id": "x", "K": [500, 0, 320, 0, 500, 240, 0, 0, 1], "image_size": [640, 480],
                             "detections": [{"label": "mug",
                                             "ellipse": {"cx": 1, "cy": 2, "ax": 3, "ay": 4, "theta": 0}}]})
        assert f.gt_camera is None and f.detections[0].sigma is None

    def test_estimates_round_trip(self, tmp_path, noisy_data):
        f = noisy_data[1][0]
        est = PoseEstimate(f.gt_camera, Association(((0, "obj001"), (2, "obj003"))), 5.0, 1.25, refined=True,
                           termination="CostStalled")
        save_estimates(tmp_path / "e.json", [("a", est, ""), ("b", None, "NoValidPose: nothing")])
        rows = load_estimates(tmp_path / "e.json")
        back = estimate_from_dict(rows[0], f.K, f.image_size)
        np.testing.assert_array_equal(back.camera.R, est.camera.R)
        assert back.inliers == est.inliers and back.final_cost == 1.25 and back.termination == "CostStalled"
        assert estimate_from_dict(rows[1], f.K, f.image_size) is None
        assert rows[1]["error"].startswith("NoValidPose")

    def test_nan_costs_stored_as_null(self, tmp_path, noisy_data):
        f = noisy_data[1][0]
        save_estimates(tmp_path / "e.json", [("a", PoseEstimate(f.gt_camera, Association()), "")])
        text = (tmp_path / "e.json").read_text()
        assert "NaN" not in text
        assert json.loads(text)["estimates"][0]["final_cost"] is None

    def test_atomic_writer_keeps_old_file_on_error(self, tmp_path):
        path = tmp_path / "out.txt"
        path.write_text("old")
        with pytest.raises(RuntimeError):
            with atomic_writer(path) as fh:
                fh.write("partial")
                raise RuntimeError("boom")
        assert path.read_text() == "old"
        assert list(tmp_path.iterdir()) == [path]
