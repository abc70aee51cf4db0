import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from solitonlab.catalog import SolitonSpec, make_flat_plane, make_grim_reaper_cylinder
from solitonlab.errors import DegenerateMetricError, SolitonLabError, UnsupportedOperation
from solitonlab.patch import (
    AmbientStructure,
    Chart,
    ParameterGrid,
    build_patch,
    complex_structure,
    lagrangian_defect,
    metric_data,
    project,
    second_fundamental_form,
)
from oracles import at

T_Y1 = np.array([0.0, 1.0, 0.0, 0.0])


@pytest.fixture(scope="module")
def cylinder():
    # a 65-node axis on [-pi/2.2, pi/2.2] does not hit pi/4 exactly, so use a grid that does
    return make_grim_reaper_cylinder(2, [(-math.pi / 4, math.pi / 4), (0, 1)], 64)


@pytest.fixture(scope="module")
def flat():
    return make_flat_plane(2, [1.0, 0, 0, 0], [(0, 1), (0, 1)], 16)


def linear_chart(vectors, lagrangian=False):
    vectors = np.asarray(vectors, dtype=float)  # (n, N)
    n, N = vectors.shape

    def position(u):
        return u @ vectors

    def jets_(u, order):
        parts = [position(u), np.broadcast_to(vectors.T, u.shape[:-1] + (N, n)).copy()]
        parts += [np.zeros(u.shape[:-1] + (N,) + (n,) * d) for d in range(2, order + 1)]
        return parts

    return Chart(position, N, jets_, lagrangian=lagrangian)


# --- grid -------------------------------------------------------------------

def test_grid_spacing_and_interior():
    g = ParameterGrid.uniform([(0, 1), (-1, 1)], 8, margin=2)
    assert g.spacing == pytest.approx((1 / 8, 2 / 8))
    assert g.interior.sum() == (9 - 4) ** 2


@pytest.mark.parametrize("kwargs", [
    dict(window=[(0, 1)], resolution=3),          # fewer than 5 nodes
    dict(window=[(1, 1)], resolution=8),          # zero-width axis
    dict(window=[(0, 1)], resolution=4, margin=3),  # nothing left inside the margin
])
def test_grid_rejections(kwargs):
    with pytest.raises(SolitonLabError):
        ParameterGrid.uniform(**kwargs)


def test_trapezoid_weights_integrate_constants():
    g = ParameterGrid.uniform([(0, 2), (0, 3)], 10)
    assert g.trapezoid_weights().sum() == pytest.approx(6.0, rel=1e-14)


# --- ambient structure -------------------------------------------------------

@given(st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_complex_structure_invariants(n, seed):
    J = complex_structure(2 * n)
    rng = np.random.default_rng(seed)
    U, V = rng.normal(size=2 * n), rng.normal(size=2 * n)
    np.testing.assert_allclose(J @ J, -np.eye(2 * n))
    assert (J @ U) @ (J @ V) == pytest.approx(U @ V)
    amb = AmbientStructure(2 * n, np.ones(2 * n))
    assert amb.omega(U, V) == pytest.approx(-amb.omega(V, U))


def test_interleaved_convention():
    J = complex_structure(4)
    np.testing.assert_array_equal(J @ [1, 0, 0, 0], [0, 1, 0, 0])
    np.testing.assert_array_equal(J @ [0, 1, 0, 0], [-1, 0, 0, 0])


def test_zero_translation_rejected():
    with pytest.raises(SolitonLabError):
        AmbientStructure(4, np.zeros(4))


# --- build_patch examples ------------------------------------------------------

def test_flat_plane_has_identity_metric(flat):
    md = metric_data(flat)
    np.testing.assert_array_equal(md.g, np.broadcast_to(np.eye(2), md.g.shape))
    assert not np.any(md.christoffel)


def test_grim_reaper_metric_at_quarter_pi(cylinder):
    i = at(cylinder.grid, (math.pi / 4, 0.5))
    md = metric_data(cylinder)
    assert md.g[i][0, 0] == pytest.approx(2.0, rel=1e-14)
    assert md.area_density[i] == pytest.approx(math.sqrt(2), rel=1e-14)


def test_grim_reaper_metric_at_origin(cylinder):
    i = at(cylinder.grid, (0.0, 0.5))
    md = metric_data(cylinder)
    np.testing.assert_allclose(md.g[i], np.eye(2), atol=1e-15)
    assert md.area_density[i] == pytest.approx(1.0)


def test_collapsing_chart_is_rejected_with_node():
    chart = linear_chart([[1, 0, 1, 0], [0, 0, 0, 0]])
    grid = ParameterGrid.uniform([(0, 1), (0, 1)], 8)
    with pytest.raises(DegenerateMetricError) as err:
        build_patch(chart, grid, AmbientStructure(4, T_Y1))
    assert err.value.node is not None
    assert "node" in str(err.value)


def test_lagrangian_flag_needs_n_equal_half_N():
    chart = linear_chart([[1, 0, 0], [0, 1, 0]], lagrangian=True)
    grid = ParameterGrid.uniform([(0, 1), (0, 1)], 8)
    with pytest.raises(SolitonLabError):
        build_patch(chart, grid, AmbientStructure(3, [0, 0, 1.0]))


def test_fd_backend_needs_room_for_stencil():
    with pytest.raises(SolitonLabError):
        SolitonSpec("flat-plane", 1, resolution=3).build("fd")


# --- metric invariants ---------------------------------------------------------

@pytest.mark.parametrize("backend", ["analytic", "fd"])
def test_metric_invariants(backend):
    p = SolitonSpec("grim-reaper-product", 2, (1.0, 2.0), ((-0.7, 0.7), (-0.7, 0.7)), 32).build(backend)
    md = metric_data(p)
    inside = p.interior
    g, gi = md.g[inside], md.ginv[inside]
    np.testing.assert_array_equal(g, np.swapaxes(g, -1, -2))
    assert np.all(np.linalg.eigvalsh(g) > 0)
    np.testing.assert_allclose(g @ gi, np.broadcast_to(np.eye(2), g.shape), atol=1e-12)
    gam = md.christoffel[inside]
    np.testing.assert_array_equal(gam, np.swapaxes(gam, -1, -2))


# --- second fundamental form -----------------------------------------------------

def test_flat_plane_sff_vanishes(flat):
    s = second_fundamental_form(flat)
    assert not np.any(s.h) and not np.any(s.H)


@pytest.mark.parametrize("u, H", [(0.0, (0, 1, 0, 0)), (math.pi / 4, (-0.5, 0.5, 0, 0))])
def test_grim_reaper_mean_curvature(cylinder, u, H):
    s = second_fundamental_form(cylinder)
    np.testing.assert_allclose(s.H[at(cylinder.grid, (u, 0.3))], H, atol=1e-14)


@pytest.mark.parametrize("backend", ["analytic", "fd"])
def test_sff_symmetries(backend):
    p = SolitonSpec("grim-reaper-product", 2, (1.0, 2.0), ((-0.7, 0.7), (-0.7, 0.7)), 32).build(backend)
    s = second_fundamental_form(p)
    inside = p.interior
    h = s.h[inside]
    np.testing.assert_array_equal(h, np.swapaxes(h, -1, -2))
    C = s.cubic[inside]
    tol = 1e-12 if backend == "analytic" else 1e-10
    for perm in [(0, 2, 1), (1, 0, 2), (2, 1, 0)]:
        axes = [0] + [1 + q for q in perm]
        assert np.max(np.abs(C - np.transpose(C, axes))) <= tol


def test_mean_curvature_is_trace_of_sff(cylinder):
    s = second_fundamental_form(cylinder)
    md = metric_data(cylinder)
    np.testing.assert_allclose(np.einsum("...ij,...Aij->...A", md.ginv, s.h), s.H, atol=1e-14)


def test_framed_components_need_lagrangian():
    chart = linear_chart([[1, 0, 0, 0], [0, 1, 0, 0]])
    p = build_patch(chart, ParameterGrid.uniform([(0, 1), (0, 1)], 8), AmbientStructure(4, T_Y1))
    with pytest.raises(UnsupportedOperation):
        second_fundamental_form(p).framed()


# --- projections ----------------------------------------------------------------

def test_tangent_vector_has_no_normal_part(cylinder):
    _, perp = project(cylinder, cylinder.frame.value[..., 0])
    assert np.max(np.abs(perp)) < 1e-14


def test_normal_part_of_translation(cylinder):
    p = make_grim_reaper_cylinder(2, [(-math.pi / 3, math.pi / 3), (0, 1)], 64)
    _, perp = project(p, T_Y1)
    i = at(p.grid, (math.pi / 3, 0.5))
    assert np.linalg.norm(perp[i]) == pytest.approx(0.5, abs=1e-14)


def test_flat_plane_vertical_vector_is_normal(flat):
    WT, perp = project(flat, T_Y1)
    assert not np.any(WT)
    np.testing.assert_array_equal(perp, np.broadcast_to(T_Y1, perp.shape))


@given(st.integers(0, 2**31 - 1))
def test_projection_is_idempotent_and_orthogonal(seed):
    p = make_grim_reaper_cylinder(2, [(-1, 1), (0, 1)], 16)
    W = np.random.default_rng(seed).normal(size=4)
    WT, perp = project(p, W)
    WT2, perp2 = project(p, WT)
    np.testing.assert_allclose(WT2, WT, atol=1e-13)
    assert np.max(np.abs(perp2)) < 1e-13
    assert np.max(np.abs(np.einsum("...A,...A->...", WT, perp))) <= 1e-10 * (W @ W)
    # the split is exact up to one rounding of the subtraction
    np.testing.assert_allclose(WT + perp, np.broadcast_to(W, WT.shape), rtol=0, atol=4e-16 * np.abs(W).max())


# --- Lagrangian defect --------------------------------------------------------------

def test_lagrangian_defect_examples(flat, cylinder):
    assert not np.any(lagrangian_defect(flat))
    assert np.max(lagrangian_defect(cylinder)) <= 1e-10
    chart = linear_chart([[1, 0, 0, 0], [0, 1, 0, 0]])
    p = build_patch(chart, ParameterGrid.uniform([(0, 1), (0, 1)], 8), AmbientStructure(4, T_Y1))
    np.testing.assert_array_equal(lagrangian_defect(p), 1.0)


def test_lagrangian_defect_needs_even_dimension():
    chart = linear_chart([[1, 0, 0], [0, 1, 0]])
    p = build_patch(chart, ParameterGrid.uniform([(0, 1), (0, 1)], 8), AmbientStructure(3, [0, 0, 1.0]))
    with pytest.raises(UnsupportedOperation):
        lagrangian_defect(p)


def test_fd_matches_analytic_to_second_order():
    from solitonlab import suite
    spec = SolitonSpec("grim-reaper-cylinder", 2, window=((-1, 1), (0, 1)))
    rep = suite.convergence_study("geometry", spec, [16, 32, 64, 128], "fd")
    assert rep.passed
    assert rep.order >= 1.8
