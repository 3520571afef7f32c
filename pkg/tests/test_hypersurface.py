import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bifh.errors import ConfigError, ImmersionFailure, ModePreconditionFailed, OffManifold
from bifh.hypersurface import (
    SurfaceChart,
    chart_geometry,
    convergence_study,
    corollary_residual,
    corpus,
    direct_bi_f_tension_oracle,
    intrinsic_grad,
    laplace_beltrami,
    residual_normal,
    residual_tangential,
    ricci_terms,
    roundoff_floor,
    split,
)
from bifh.spaceform import SpaceForm


@pytest.fixture(scope="module")
def charts():
    return {c.name: c for c in corpus(65)}


@pytest.fixture(scope="module")
def geoms(charts):
    return {name: chart_geometry(c) for name, c in charts.items()}


def _inner(geom, values, shrink=0.1):
    return np.asarray(values)[geom.inner_box(shrink)]


def test_corpus_mean_curvatures(geoms):
    expected = {"plane": 0.0, "sphere": 1.0, "cylinder": 0.5, "sphere-in-S3": 1 / np.tan(1.0)}
    for name, H in expected.items():
        assert np.allclose(np.abs(_inner(geoms[name], geoms[name].H)), H, atol=1e-6), name
    assert np.allclose(_inner(geoms["sphere"], geoms["sphere"].A2), 2.0, atol=1e-6)


def test_normal_is_unit_and_orthogonal(geoms):
    for geom in geoms.values():
        xi = geom.xi[geom.inner_box()]
        assert np.allclose(geom.inner(xi, xi), 1.0, atol=1e-12)
        for a in range(2):
            assert np.allclose(geom.inner(xi, geom.d1[a][geom.inner_box()]), 0.0, atol=1e-12)


def test_laplace_beltrami_on_sphere_eigenfunction(charts, geoms):
    z = charts["sphere"].field("z")
    lap = laplace_beltrami(geoms["sphere"], z)
    assert np.allclose(_inner(geoms["sphere"], lap), _inner(geoms["sphere"], -2 * z), atol=1e-3)


def test_gradient_of_graph_height(charts, geoms):
    geom = geoms["plane"]
    G = intrinsic_grad(geom, charts["plane"].field("u^2+v"))
    U, V = charts["plane"].mesh()
    mask = geom.inner_box()
    assert np.allclose(G[mask], np.stack([2 * U, np.ones_like(V)], -1)[mask], atol=1e-10)


def test_plane_residuals_vanish(charts, geoms):
    res = corollary_residual(geoms["plane"], charts["plane"].field("1+0.1*x"))
    assert res.sup_tangential < 1e-9 and res.sup_normal < 1e-9


def test_unit_sphere_constant_weight(charts, geoms):
    geom = geoms["sphere"]
    f = np.ones(geom.H.shape)
    assert np.allclose(_inner(geom, residual_normal(geom, f)), 4.0, atol=1e-3)
    assert np.max(geom.norm(residual_tangential(geom, f))[geom.inner_box()]) < 1e-6


def test_ricci_terms_of_space_form(charts, geoms):
    geom = geoms["sphere-in-S3"]
    f = charts["sphere-in-S3"].field("1+0.1*x")
    rt = ricci_terms(geom.space, geom, f)
    assert np.all(rt.xi_xi == 2.0)
    assert np.all(rt.gradf_xi == 0) and np.all(rt.xi_tangent == 0)
    assert np.allclose(rt.gradf_tangent, 2 * intrinsic_grad(geom, f), equal_nan=True)


def test_curvature_trace_choice(charts, geoms):
    geom = geoms["sphere-in-S3"]
    f = charts["sphere-in-S3"].field("1+0.1*x")
    diff = residual_tangential(geom, f, curvature_trace="tangent") - residual_tangential(geom, f, curvature_trace="ricci")
    expected = f[..., None] * intrinsic_grad(geom, f)
    mask = geom.inner_box()
    assert np.allclose(diff[mask], expected[mask], atol=1e-14)
    with pytest.raises(ConfigError):
        residual_tangential(geom, f, curvature_trace="other")


def test_cmc_mode_is_negated_general_form(charts, geoms):
    geom = geoms["sphere-in-S3"]
    f = charts["sphere-in-S3"].field("1+0.1*x")
    gen = corollary_residual(geom, f)
    cmc = corollary_residual(geom, f, "cmc", h_tol=1e-5)
    mask = geom.inner_box()
    assert np.allclose(cmc.normal[mask], -gen.normal[mask], atol=1e-9)
    assert np.allclose(cmc.tangential[mask], -gen.tangential[mask], atol=1e-9)


def test_mode_preconditions(charts, geoms):
    with pytest.raises(ModePreconditionFailed):
        corollary_residual(geoms["graph"], charts["graph"].field("1"), "cmc")
    with pytest.raises(ModePreconditionFailed):
        corollary_residual(geoms["sphere-in-S3"], charts["sphere-in-S3"].field("1"), "ricci-flat", h_tol=1e-5)
    with pytest.raises(ConfigError):
        corollary_residual(geoms["plane"], charts["plane"].field("1"), "einstein")
    with pytest.raises(ConfigError):
        corollary_residual(geoms["plane"], charts["plane"].field("1"), "bogus")
    with pytest.raises(ConfigError):
        corollary_residual(geoms["plane"], charts["plane"].field("x-1"))
    res = corollary_residual(geoms["graph"], charts["graph"].field("1"), "constant-c")
    assert any("mean curvature varies" in d for d in res.diagnostics)


def test_ricci_flat_matches_cmc_in_flat_space(charts, geoms):
    f = charts["cylinder"].field("1+0.1*x")
    a = corollary_residual(geoms["cylinder"], f, "ricci-flat")
    b = corollary_residual(geoms["cylinder"], f, "cmc")
    mask = geoms["cylinder"].inner_box()
    assert np.allclose(a.normal[mask], b.normal[mask], atol=1e-12)
    assert np.allclose(a.tangential[mask], b.tangential[mask], atol=1e-12)


@settings(max_examples=8, deadline=None)
@given(a=st.floats(-0.4, 0.4), b=st.floats(-0.4, 0.4), c=st.floats(-0.4, 0.4))
def test_orientation_flip(a, b, c):
    chart = SurfaceChart.from_strings(["u", "v", f"{a}*u^2+{b}*u*v+{c}*v^3"], [[-0.5, 0.5], [-0.5, 0.5]], (25, 25))
    f = chart.field("1+0.2*x+0.1*y^2")
    g1, g2 = chart_geometry(chart), chart_geometry(chart.flipped())
    assert np.allclose(g2.H, -g1.H, equal_nan=True)
    assert np.allclose(residual_normal(g2, f), -residual_normal(g1, f), equal_nan=True, atol=1e-12)
    assert np.allclose(residual_tangential(g2, f), residual_tangential(g1, f), equal_nan=True, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(a=st.floats(-1, 1), b=st.floats(-1, 1), c=st.floats(-1, 1), d=st.floats(-1, 1))
def test_shape_operator_bound(a, b, c, d):
    """|A|^2 >= m H^2 with equality only at umbilics."""
    chart = SurfaceChart.from_strings(
        ["u", "v", f"{a}*u^2+{b}*u*v+{c}*v^2+{d}*u^3"], [[-0.5, 0.5], [-0.5, 0.5]], (17, 17))
    geom = chart_geometry(chart)
    ok = np.isfinite(geom.A2)
    assert np.all(geom.A2[ok] - 2 * geom.H[ok] ** 2 >= -1e-10)


@settings(max_examples=4, deadline=None)
@given(a=st.floats(-0.3, 0.3), b=st.floats(-0.3, 0.3), c=st.floats(-0.3, 0.3))
def test_identities_converge_on_random_graphs(a, b, c):
    chart = SurfaceChart.from_strings(["u", "v", f"{a}*u^2+{b}*u*v+{c}*v^3"], [[-0.5, 0.5], [-0.5, 0.5]], (33, 33))
    for r in convergence_study(chart, "1+0.1*x+0.05*y^2", which="identities"):
        assert r.passed(), r


def test_oracle_agrees_on_sphere_in_s3(charts, geoms):
    geom = geoms["sphere-in-S3"]
    f = charts["sphere-in-S3"].field("1+0.1*x")
    parts = split(geom, direct_bi_f_tension_oracle(geom, f))
    mask = geom.inner_box()
    assert np.allclose(parts.normal[mask], residual_normal(geom, f)[mask], atol=1e-3)


def test_chart_validation():
    with pytest.raises(ConfigError):
        SurfaceChart.from_strings(["u", "v"], [[0, 1], [0, 1]], (17, 17))
    with pytest.raises(ConfigError):
        SurfaceChart.from_strings(["u", "v", "0"], [[0, 1], [0, 1]], (5, 17))
    with pytest.raises(ConfigError):
        SurfaceChart.from_json({"components": ["u", "v", "0"], "domain": [[0, 1], [0, 1]]})
    with pytest.raises(ImmersionFailure):
        chart_geometry(SurfaceChart.from_strings(["u", "u", "v*0"], [[0, 1], [0, 1]], (17, 17)))
    with pytest.raises(OffManifold):
        chart_geometry(SurfaceChart.from_strings(["u", "v", "1", "1"], [[0, 1], [0, 1]], (17, 17), "sphere"))


def test_chart_from_json_and_refine():
    chart = SurfaceChart.from_json('{"components": ["u", "v", "u*v"], "domain": [[0, 1], [0, 2]], "grid": [9, 17]}')
    assert chart.h == (0.125, 0.125)
    assert chart.refined().grid == (17, 33)
    assert chart.points().shape == (9, 17, 3)
    assert chart.space == SpaceForm.euclidean(3)


def test_roundoff_floor_scaling():
    assert roundoff_floor(1 / 128) == pytest.approx(8 * roundoff_floor(1 / 64))
