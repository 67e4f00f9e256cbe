import numpy as np
import pytest

from ellipose.errors import CollinearPoints, NoRealSolution
from ellipose.optim import rotation_log
from ellipose.p3p import bearing_residual, kabsch, p3p

from oracles import random_p3p_case, random_rotation


def contains(solutions, R, t, tol=1e-6):
    return any(np.abs(t - ts).max() < tol and np.linalg.norm(rotation_log(Rs.T @ R)) < tol for Rs, ts in solutions)


def test_kabsch_exact(rng):
    for _ in range(20):
        R = random_rotation(rng)
        t = rng.normal(size=3)
        src = rng.normal(size=(5, 3))
        Rk, tk = kabsch(src, src @ R.T + t)
        np.testing.assert_allclose(Rk, R, atol=1e-12)
        np.testing.assert_allclose(tk, t, atol=1e-12)
        assert np.linalg.det(Rk) == pytest.approx(1.0)


def test_known_configuration():
    X = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    t = np.array([-0.2, -0.3, 4.0])
    f = X + t
    f /= np.linalg.norm(f, axis=1, keepdims=True)
    sols = p3p(X, f)
    assert 1 <= len(sols) <= 4
    assert contains(sols, np.eye(3), t)


def test_random_recovery(rng):
    checked = 0
    for _ in range(300):
        X, f, R, t, ok = random_p3p_case(rng)
        if not ok:
            continue
        checked += 1
        sols = p3p(X, f)
        assert contains(sols, R, t), "ground truth missing from the solution set"
        for Rs, ts in sols:
            assert bearing_residual(Rs, ts, X, f) < 1e-6
            assert np.abs(Rs.T @ Rs - np.eye(3)).max() < 1e-9
    assert checked > 200


def test_collinear():
    X = np.array([[0.0, 0, 0], [1, 1, 1], [2, 2, 2]])
    f = np.array([[0, 0, 1.0], [0.1, 0, 1], [0, 0.1, 1]])
    with pytest.raises(CollinearPoints):
        p3p(X, f)


def test_identical_bearings():
    X = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]])
    with pytest.raises(NoRealSolution):
        p3p(X, np.array([[0, 0, 1.0], [0, 0, 1.0], [0.1, 0, 1]]))


def test_unnormalized_bearings_accepted(rng):
    X, f, R, t, _ = random_p3p_case(np.random.default_rng(3))
    assert contains(p3p(X, f * np.array([[2.0], [0.5], [7.0]])), R, t)
