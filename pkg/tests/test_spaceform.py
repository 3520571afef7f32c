import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bifh.errors import ConfigError, DimensionMismatch, OffManifold
from bifh.spaceform import (
    SpaceForm,
    curvature_tensor_apply,
    from_name,
    metric_eval,
    on_manifold_check,
    project_to_manifold,
    tangent_project,
)

vec4 = arrays(np.float64, 4, elements=st.floats(-2, 2))


@pytest.fixture(params=["euclidean", "sphere", "hyperbolic"])
def space(request):
    return SpaceForm(request.param, 3)


def _point(space, rng):
    x = rng.normal(size=space.ambient_dim)
    if space.model == "hyperbolic":
        x[0] = abs(x[0]) + 2.0
    return project_to_manifold(space, x)


def test_curvature_and_dimension(space):
    assert space.c == {"euclidean": 0.0, "sphere": 1.0, "hyperbolic": -1.0}[space.model]
    assert space.ambient_dim == (3 if space.model == "euclidean" else 4)


def test_invalid_model_and_dimension():
    with pytest.raises(ConfigError):
        SpaceForm("torus", 3)
    with pytest.raises(ConfigError):
        SpaceForm.sphere(1)
    assert from_name("Sphere", 2) == SpaceForm.sphere(2)


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        metric_eval(SpaceForm.sphere(3), np.ones(3), np.ones(3))


def test_projection_lands_on_model_and_tangent_space(space):
    rng = np.random.default_rng(3)
    p = _point(space, rng)
    assert on_manifold_check(space, p, 1e-12)
    v = tangent_project(space, p, rng.normal(size=space.ambient_dim))
    if space.model != "euclidean":
        assert abs(metric_eval(space, v, p)) < 1e-12


def test_lower_sheet_rejected():
    hyp = SpaceForm.hyperbolic(2)
    with pytest.raises(OffManifold):
        project_to_manifold(hyp, np.array([-2.0, 1.0, 0.0]))
    assert not on_manifold_check(hyp, np.array([-1.0, 0.0, 0.0]), 1e-9)


def test_sectional_curvature_equals_c(space):
    rng = np.random.default_rng(11)
    p = _point(space, rng)
    X = tangent_project(space, p, rng.normal(size=space.ambient_dim))
    Y = tangent_project(space, p, rng.normal(size=space.ambient_dim))
    R = curvature_tensor_apply(space, X, Y, Y)
    num = metric_eval(space, R, X)
    den = metric_eval(space, X, X) * metric_eval(space, Y, Y) - metric_eval(space, X, Y) ** 2
    assert num / den == pytest.approx(space.c, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(X=vec4, Y=vec4, Z=vec4, W=vec4)
def test_curvature_tensor_symmetries(X, Y, Z, W):
    hyp = SpaceForm.hyperbolic(3)
    R = lambda a, b, c: curvature_tensor_apply(hyp, a, b, c)  # noqa: E731
    h = lambda a, b: metric_eval(hyp, a, b)  # noqa: E731
    scale = 1 + max(np.abs(v).max() for v in (X, Y, Z, W)) ** 4
    assert np.allclose(R(X, Y, Z), -R(Y, X, Z), atol=1e-12 * scale)
    assert np.allclose(R(X, Y, Z) + R(Y, Z, X) + R(Z, X, Y), 0, atol=1e-11 * scale)
    assert abs(h(R(X, Y, Z), W) + h(R(X, Y, W), Z)) <= 1e-11 * scale


def test_bare_curvature_uses_euclidean_products():
    X, Y = np.array([1.0, 0, 0]), np.array([0, 1.0, 0])
    assert np.allclose(curvature_tensor_apply(2.0, X, Y, Y), 2 * X)
