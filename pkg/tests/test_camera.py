import numpy as np
import pytest

from vocovar.camera import Z_MIN, PinholeIntrinsics, back_project, bearing, project, project_jacobian
from vocovar.errors import CheiralityViolation, InvalidInverseDepth, ValidationError

from helpers import K_TEST, fd_vec, rel_err

K100 = PinholeIntrinsics(fx=100, fy=100, cx=50, cy=50, width=100, height=100)


def test_principal_axis_projects_to_principal_point():
    np.testing.assert_array_equal(project(K100, [0, 0, 1]), [50, 50])


def test_offset_point():
    np.testing.assert_allclose(project(K100, [1, 0, 2]), [100, 50])


def test_back_project_principal_ray():
    np.testing.assert_allclose(back_project(K100, (50, 50), 0.5), [0, 0, 2])


def test_back_project_tiny_inverse_depth():
    p = (80.0, 20.0)
    X = back_project(K100, p, 1e-6)
    assert X[2] == pytest.approx(1e6)
    ray = np.array([(80 - 50) / 100, (20 - 50) / 100, 1.0])
    np.testing.assert_allclose(X / np.linalg.norm(X), ray / np.linalg.norm(ray), atol=1e-14)


@pytest.mark.parametrize("d", [0.0, -1.0, float("nan")])
def test_back_project_rejects_bad_inverse_depth(d):
    with pytest.raises(InvalidInverseDepth):
        back_project(K100, (1, 1), d)


@pytest.mark.parametrize("z", [0.0, -1.0, Z_MIN])
def test_cheirality(z):
    with pytest.raises(CheiralityViolation):
        project(K100, [0.1, 0.1, z])
    with pytest.raises(CheiralityViolation):
        project_jacobian(K100, [0.1, 0.1, z])


def test_just_above_z_min_is_accepted():
    project(K100, [0, 0, 2 * Z_MIN])


def test_roundtrip_random():
    rng = np.random.default_rng(0)
    for _ in range(200):
        X = np.array([rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(0.1, 20)])
        p = project(K_TEST, X)
        np.testing.assert_allclose(back_project(K_TEST, p, 1.0 / X[2]), X, rtol=1e-10, atol=1e-10)
        q = np.array([rng.uniform(0, 640), rng.uniform(0, 480)])
        d = rng.uniform(1e-3, 10)
        np.testing.assert_allclose(project(K_TEST, back_project(K_TEST, q, d)), q, atol=1e-10)


def test_homogeneity():
    rng = np.random.default_rng(1)
    for _ in range(50):
        X = np.array([rng.normal(), rng.normal(), rng.uniform(0.5, 4)])
        s = rng.uniform(0.1, 10)
        np.testing.assert_allclose(project(K_TEST, s * X), project(K_TEST, X), atol=1e-10)
        np.testing.assert_allclose(project_jacobian(K_TEST, s * X), project_jacobian(K_TEST, X) / s, rtol=1e-12)


def test_jacobian_unit_depth():
    K = PinholeIntrinsics(1, 1, 0.5, 0.5, 1, 1)
    np.testing.assert_array_equal(project_jacobian(K, [0, 0, 1]), [[1, 0, 0], [0, 1, 0]])


def test_jacobian_matches_finite_differences():
    rng = np.random.default_rng(2)
    for _ in range(100):
        X = np.array([rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0.3, 8)])
        num = fd_vec(lambda v: project(K_TEST, v), X)
        assert rel_err(project_jacobian(K_TEST, X), num) < 1e-5


def test_bearing_has_unit_z():
    assert bearing(K_TEST, (10.0, 400.0))[2] == 1.0


@pytest.mark.parametrize(
    "args",
    [
        (0, 1, 1, 1, 2, 2),
        (1, -1, 1, 1, 2, 2),
        (1, 1, 0, 1, 2, 2),
        (1, 1, 1, 2, 2, 2),
        (1, 1, float("inf"), 1, 2, 2),
    ],
)
def test_invalid_intrinsics(args):
    with pytest.raises(ValidationError):
        PinholeIntrinsics(*args)


def test_in_frame():
    assert K100.in_frame((0, 0))
    assert not K100.in_frame((100, 5))
    assert not K100.in_frame((-0.1, 5))
