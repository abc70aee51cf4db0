import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st

from solitonlab.catalog import (
    SolitonSpec,
    flat_plane_with_translation,
    grim_reaper_profile,
    make_flat_plane,
    make_grim_reaper_cylinder,
    make_grim_reaper_product,
    soliton_residual,
)
from solitonlab.errors import SolitonLabError
from solitonlab.patch import lagrangian_defect


@pytest.mark.parametrize("c", [0.5, 1.0, 2.0])
def test_profile_derivatives_match_sympy(c):
    u = sp.Symbol("u")
    y = -sp.log(sp.cos(c * u)) / c
    pts = np.linspace(-0.7, 0.7, 9) * math.pi / (2 * c)
    got = grim_reaper_profile(pts, c, 4)
    for d in range(5):
        want = sp.lambdify(u, sp.diff(y, u, d), "numpy")(pts)
        np.testing.assert_allclose(got[d], want, rtol=1e-12, atol=1e-14)


def test_flat_plane_examples():
    p = make_flat_plane(2, [1.0, 0, 0, 0], [(0, 1), (0, 1)], 16)
    assert not np.any(p.mean_curvature_jet.value)
    p1 = make_flat_plane(1, [2.0, 0], [(0, 1)], 16)
    assert soliton_residual(p1)[0] == 0.0
    with pytest.raises(SolitonLabError, match="normal component"):
        make_flat_plane(2, [0, 1.0, 0, 0], [(0, 1), (0, 1)], 16)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_grim_reaper_cylinder_is_a_soliton(n):
    window = [(-1, 1)] + [(0, 1)] * (n - 1)
    p = make_grim_reaper_cylinder(n, window, 16 if n == 3 else 64)
    assert soliton_residual(p)[0] <= 1e-8
    assert np.max(lagrangian_defect(p)) <= 1e-10


def test_cylinder_window_past_blowup_is_rejected():
    with pytest.raises(SolitonLabError, match="pi/"):
        make_grim_reaper_cylinder(2, [(-1.6, 1.6), (0, 1)])


@pytest.mark.parametrize("speeds, window", [((1, 1), [(-1, 1)] * 2), ((1, 2), [(-0.7, 0.7)] * 2)])
def test_grim_reaper_products(speeds, window):
    p = make_grim_reaper_product(speeds, window)
    assert soliton_residual(p)[0] <= 1e-8
    np.testing.assert_array_equal(p.T, [0, speeds[0], 0, speeds[1]])


def test_product_rejects_bad_speeds_and_windows():
    with pytest.raises(SolitonLabError):
        make_grim_reaper_product((1, 0), [(-0.5, 0.5)] * 2)
    with pytest.raises(SolitonLabError):
        make_grim_reaper_product((1, 2), [(-0.8, 0.8)] * 2)  # pi/4 < 0.8


def test_wrong_translation_gives_unit_residual():
    p = flat_plane_with_translation(2, [0, 1.0, 0, 0], [(0, 1), (0, 1)], 16)
    assert soliton_residual(p)[0] == pytest.approx(1.0)


def test_fd_residual_converges_at_second_order():
    from solitonlab import suite
    spec = SolitonSpec("grim-reaper-cylinder", 2, window=((-1, 1), (0, 1)))
    rep = suite.convergence_study("soliton_residual", spec, [16, 32, 64, 128], "fd")
    assert rep.passed and rep.order >= 1.8


def test_default_windows_are_eighty_percent():
    s = SolitonSpec("grim-reaper-product", 2, (1.0, 2.0))
    np.testing.assert_allclose(s.window, [(-0.4 * math.pi, 0.4 * math.pi), (-0.2 * math.pi, 0.2 * math.pi)])


def test_unknown_name_lists_catalog():
    with pytest.raises(SolitonLabError, match="grim-reaper-cylinder"):
        SolitonSpec("bowl")


specs = st.one_of(
    st.builds(lambda n, r: SolitonSpec("flat-plane", n, resolution=r), st.integers(1, 3), st.integers(8, 128)),
    st.builds(lambda n, a: SolitonSpec("grim-reaper-cylinder", n, window=((-a, a),) + ((0.0, 1.0),) * (n - 1)),
              st.integers(1, 3), st.floats(0.1, 1.5)),
    st.builds(lambda cs, f: SolitonSpec("grim-reaper-product", len(cs), tuple(cs),
                                        tuple((-f * math.pi / (2 * c), f * math.pi / (2 * c)) for c in cs)),
              st.lists(st.floats(0.1, 5.0), min_size=1, max_size=3), st.floats(0.05, 0.95)),
)


@given(specs)
def test_spec_round_trips(spec):
    assert SolitonSpec.from_text(spec.to_text()) == spec
    assert SolitonSpec.from_dict(spec.to_dict()) == spec


@given(specs)
def test_catalog_translation_vectors(spec):
    T = spec.T
    assert np.any(T)
    if spec.name == "flat-plane":
        assert not np.any(T[1::2])  # tangent to the plane


@given(st.lists(st.floats(0.2, 3.0), min_size=1, max_size=2), st.floats(0.1, 0.95))
def test_every_product_is_a_soliton(speeds, frac):
    window = [(-frac * math.pi / (2 * c), frac * math.pi / (2 * c)) for c in speeds]
    p = make_grim_reaper_product(speeds, window, 16)
    assert soliton_residual(p)[0] <= 1e-8
    assert np.max(lagrangian_defect(p)) <= 1e-10
