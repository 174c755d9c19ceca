from __future__ import annotations

import numpy as np
import pytest

from morinchi.expr import Expr, parse_prefix
from morinchi.manifold import (
    ImplicitManifold,
    ManifoldError,
    ProjectionError,
    RegularityError,
    project_to_manifold,
    standard_manifold,
    tangent_frame,
    validate_regularity,
)


@pytest.fixture
def sphere2():
    return standard_manifold("sphere", m=2)


@pytest.fixture
def torus():
    return standard_manifold("torus")


def test_sphere_regularity_min_singular_value(sphere2):
    report = validate_regularity(sphere2, count=25, seed=0)
    assert report.ok
    # |grad(sum x^2 - 1)| = 2 everywhere on the unit sphere
    assert report.min_singular_value == pytest.approx(2.0, abs=1e-9)


def test_torus_regularity(torus):
    report = validate_regularity(torus, count=25, seed=0)
    assert report.ok
    assert report.min_singular_value > 1e-3


def test_double_root_constraint_fails_regularity():
    g = Expr.variable(0, 2) ** 2
    M = ImplicitManifold(2, [g], 1, sample_seeds=[(0.1, 0.3)])
    report = validate_regularity(M, count=5, seed=0)
    assert not report.ok
    assert report.failures  # offending points reported, all near x0 = 0
    assert all(abs(p[0]) < 1e-3 for p in report.failures)


def test_projection_radial(sphere2):
    p = project_to_manifold(sphere2, (0.0, 0.0, 2.0))
    assert np.allclose(p, (0, 0, 1), atol=1e-12)


def test_projection_normalization(sphere2):
    p = project_to_manifold(sphere2, (3.0, 4.0, 0.0))
    assert np.allclose(p, (0.6, 0.8, 0.0), atol=1e-12)


def test_projection_torus_residual_and_idempotence(torus):
    p = project_to_manifold(torus, (2.5, 0.7, 0.9))
    assert torus.residual(p) <= 1e-12
    p2 = project_to_manifold(torus, p)
    assert np.linalg.norm(p2 - p) < 1e-12


def test_tangent_frame_north_pole(sphere2):
    fr = tangent_frame(sphere2, (0.0, 0.0, 1.0))
    assert fr.tangent.shape == (2, 3)
    assert np.allclose(fr.tangent[:, 2], 0, atol=1e-12)
    assert np.allclose(np.abs(fr.normal), [[0, 0, 1]], atol=1e-12)


def test_tangent_frame_s3_pole():
    M = standard_manifold("sphere", m=3)
    fr = tangent_frame(M, (1.0, 0.0, 0.0, 0.0))
    assert np.allclose(fr.tangent[:, 0], 0, atol=1e-12)
    assert fr.tangent.shape[0] + fr.normal.shape[0] == 4


def test_tangent_frame_torus_orthogonality(torus):
    p = project_to_manifold(torus, (1.7, 1.2, 0.4))
    fr = tangent_frame(torus, p)
    J = torus.jacobian(p)
    assert float(np.max(np.abs(J @ fr.tangent.T))) <= 1e-10
    gram = fr.tangent @ fr.tangent.T
    assert np.allclose(gram, np.eye(2), atol=1e-10)


def test_frame_deterministic(torus):
    p = project_to_manifold(torus, (1.7, 1.2, 0.4))
    f1 = tangent_frame(torus, p)
    f2 = tangent_frame(torus, p)
    assert np.array_equal(f1.tangent, f2.tangent)
    assert np.array_equal(f1.normal, f2.normal)


def test_frame_rejects_off_manifold_point(sphere2):
    with pytest.raises(ManifoldError):
        tangent_frame(sphere2, (0.0, 0.0, 3.0))


def test_standard_manifold_chi_metadata():
    assert standard_manifold("sphere", m=2).chi_expected == 2
    assert standard_manifold("sphere", m=3).chi_expected == 0
    assert standard_manifold("torus").chi_expected == 0
    assert standard_manifold("product_of_spheres", a=1, b=2).chi_expected == 0
    assert standard_manifold("product_of_spheres", a=2, b=2).chi_expected == 4


def test_standard_manifold_unknown_name():
    with pytest.raises(ManifoldError):
        standard_manifold("klein-bottle")


def test_custom_manifold_from_prefix():
    M = standard_manifold(
        "custom",
        ambient_dim=2,
        constraints=["(+ (^ x0 2) (^ x1 2) -1)"],
        intrinsic_dim=1,
        chi_expected=0,
    )
    p = project_to_manifold(M, (2.0, 0.0))
    assert np.allclose(p, (1, 0), atol=1e-12)


def test_dimension_bookkeeping():
    M = standard_manifold("product_of_spheres", a=1, b=2)
    p = project_to_manifold(M, (1.0, 0.2, 0.9, 0.1, -0.2))
    fr = tangent_frame(M, p)
    assert fr.tangent.shape[0] + fr.normal.shape[0] == M.ambient_dim
