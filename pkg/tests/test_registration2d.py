import csv
import math

import numpy as np
import pytest
from scipy import stats

from ellipose.conics import Ellipse
from ellipose.metrics import MetricKind, REGISTRATION_METRICS
from ellipose.registration2d import (NEAR_CIRCLE_RATIO, NoiseSpec, RegistrationProblem, generate_problem,
                                     position_error_px, register, rotation_error_deg, run_benchmark, transform,
                                     trial_rng)

SMOOTH = (MetricKind.WASSERSTEIN, MetricKind.BHATTACHARYYA, MetricKind.LEVEL_SET)


class TestTransform:
    def test_center_pivot(self):
        e = transform(Ellipse(10, 20, 5, 2, 0.1), 0.5, 3, -4)
        assert e.allclose(Ellipse(13, 16, 5, 2, 0.6), 1e-12)

    def test_origin_pivot(self):
        e = transform(Ellipse(10, 0, 5, 2, 0.0), math.pi / 2, 1, 1, pivot="origin")
        assert e.allclose(Ellipse(1, 11, 5, 2, math.pi / 2), 1e-12)

    @pytest.mark.parametrize("pivot", ["center", "origin"])
    def test_ground_truth_inverts(self, pivot, rng):
        for _ in range(50):
            p = generate_problem(rng, NoiseSpec(), pivot=pivot)
            back = transform(p.e_moving, p.gt_rotation, *p.gt_translation, pivot=pivot)
            assert back.allclose(p.e_ref, 1e-9)
            assert position_error_px(p, p.gt_rotation, p.gt_translation) < 1e-9


class TestGenerate:
    def test_identity_forced(self, rng):
        p = generate_problem(rng, NoiseSpec(), rotation=0.0, translation=(0.0, 0.0))
        assert p.e_moving.allclose(p.e_ref, 0.0)

    def test_reproducible(self):
        a = generate_problem(trial_rng(7, 3), NoiseSpec(enabled=True))
        b = generate_problem(trial_rng(7, 3), NoiseSpec(enabled=True))
        assert a.e_moving == b.e_moving and a.e_ref == b.e_ref
        np.testing.assert_array_equal(a.gt_translation, b.gt_translation)

    def test_rotation_uniform(self):
        rng = np.random.default_rng(0)
        thetas = np.degrees([-generate_problem(rng).gt_rotation for _ in range(10_000)])
        counts, _ = np.histogram(thetas, bins=36, range=(-180, 180))
        assert stats.chisquare(counts).pvalue > 0.01

    def test_ranges(self, rng):
        for _ in range(200):
            p = generate_problem(rng, NoiseSpec(enabled=True))
            assert 20 <= p.e_ref.b <= p.e_ref.a <= 80
            assert 0 <= p.e_ref.cx <= 640 and 0 <= p.e_ref.cy <= 480
            assert np.all(np.abs(p.gt_translation) <= 60)
            # the stretched axes can swap order, so bound the area factor
            assert 0.83 ** 2 - 1e-9 <= p.e_moving.area / p.e_ref.area <= 1.2 ** 2 + 1e-9

    def test_noise_validation(self):
        with pytest.raises(ValueError):
            NoiseSpec(aniso_scale_range=(0.0, 1.0))
        with pytest.raises(ValueError):
            generate_problem(np.random.default_rng(0), pivot="corner")


class TestErrors:
    def test_rotation_fold(self):
        assert rotation_error_deg(math.radians(179), 0.0) == pytest.approx(1.0)
        assert rotation_error_deg(math.radians(90), 0.0) == pytest.approx(90.0)
        assert rotation_error_deg(math.radians(360 + 5), 0.0) == pytest.approx(5.0)
        assert rotation_error_deg(math.radians(-30), math.radians(150)) == pytest.approx(0.0, abs=1e-9)

    def test_near_circle_unobservable(self):
        e = Ellipse(0, 0, 10, 10 / (NEAR_CIRCLE_RATIO - 0.01))
        p = RegistrationProblem(e, e, 0.0, np.zeros(2))
        assert not p.rotation_observable


class TestRegister:
    @pytest.mark.parametrize("kind", list(SMOOTH) + [MetricKind.BBOX, MetricKind.ALGEBRAIC_VEC])
    def test_identity(self, kind, rng):
        p = generate_problem(rng, NoiseSpec(), rotation=0.0, translation=(0.0, 0.0))
        theta, t, _ = register(p, kind)
        assert abs(theta) < 1e-6 and np.abs(t).max() < 1e-6

    @pytest.mark.parametrize("kind", SMOOTH)
    def test_smooth_success_rate(self, kind):
        """Moderate transforms on noiseless problems are recovered almost always."""
        rng = np.random.default_rng(42)
        ok = 0
        n = 100
        for _ in range(n):
            p = generate_problem(rng, NoiseSpec(rotation_range_deg=(-90, 90), translation_range=(-30, 30)))
            theta, t, _ = register(p, kind)
            ok += position_error_px(p, theta, t) < 0.1
        assert ok >= 0.99 * n

    def test_level_set_precise(self):
        p = generate_problem(np.random.default_rng(5), NoiseSpec())
        theta, t, res = register(p, MetricKind.LEVEL_SET)
        assert position_error_px(p, theta, t) < 1e-4
        assert rotation_error_deg(theta, p.gt_rotation) < 1e-4
        assert res.converged


class TestBenchmark:
    def test_single_identity_problem(self, monkeypatch):
        import ellipose.registration2d as reg
        real = reg.generate_problem
        monkeypatch.setattr(reg, "generate_problem",
                            lambda rng, noise, pivot="center": real(rng, noise, 0.0, (0.0, 0.0), pivot))
        rep = run_benchmark(1, REGISTRATION_METRICS, seed=3)
        for m in REGISTRATION_METRICS:
            assert rep.mean_position_error(m) < 1e-6

    def test_deterministic_and_parallel_invariant(self):
        a = run_benchmark(6, SMOOTH, NoiseSpec(enabled=True), seed=9, workers=1)
        b = run_benchmark(6, SMOOTH, NoiseSpec(enabled=True), seed=9, workers=2)
        assert [(r.metric, r.trial, r.pos_err_px, r.rot_err_deg) for r in a.records] == \
               [(r.metric, r.trial, r.pos_err_px, r.rot_err_deg) for r in b.records]

    def test_csv_outputs(self, tmp_path):
        rep = run_benchmark(3, [MetricKind.WASSERSTEIN, MetricKind.BBOX], seed=1)
        rep.write_trials_csv(tmp_path / "t.csv")
        rep.write_summary_csv(tmp_path / "s.csv")
        rows = list(csv.DictReader(open(tmp_path / "t.csv")))
        assert len(rows) == 6
        assert set(rows[0]) == {"metric", "trial", "pos_err_px", "rot_err_deg", "converged"}
        lines = open(tmp_path / "s.csv").read().splitlines()
        assert lines[0].startswith("# trials=3 seed=1") and "rotation_pivot=center" in lines[0]
        assert lines[1] == "metric,mean_position_error_px,mean_rotation_error_deg,failures"
        assert [m for m, *_ in rep.summary_rows()] == ["wasserstein", "bbox"]

    def test_bad_trials(self):
        with pytest.raises(ValueError):
            run_benchmark(0)
