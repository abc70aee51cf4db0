import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st

from solitonlab import jets
from solitonlab.patch import ParameterGrid
from oracles import symbols, sympy_jet

GRID = ParameterGrid.uniform([(0.1, 0.9), (-0.5, 0.4)], 6)
U = symbols(2)


def assert_jets_close(a, b, tol=1e-10):
    assert a.order == b.order
    for pa, pb in zip(a.parts, b.parts):
        np.testing.assert_allclose(pa, pb, rtol=tol, atol=tol)


def test_product_follows_leibniz():
    f, g = sp.sin(U[0]) * U[1] ** 2, sp.exp(U[0] - U[1])
    a, b = sympy_jet(f, U, GRID, 4), sympy_jet(g, U, GRID, 4)
    assert_jets_close(a * b, sympy_jet(f * g, U, GRID, 4))


def test_einsum_contracts_vector_fields():
    v = [U[0] * U[1], sp.cos(U[1]), U[0] ** 3]
    w = [sp.sin(U[0]), U[1], 1 + U[0] * U[1]]
    got = jets.einsum("A,A->", sympy_jet(v, U, GRID, 3), sympy_jet(w, U, GRID, 3))
    want = sympy_jet(sum(a * b for a, b in zip(v, w)), U, GRID, 3)
    assert_jets_close(got, want)


def test_three_operand_einsum_matches_pairwise():
    rng = np.random.default_rng(0)
    M = jets.Jet([rng.normal(size=GRID.shape + (3, 3) + (2,) * d) for d in range(3)], 2)
    x = jets.Jet([rng.normal(size=GRID.shape + (3,) + (2,) * d) for d in range(3)], 2)
    # symmetrise derivative blocks so the parts describe a genuine jet
    for J in (M, x):
        J.parts[2] = 0.5 * (J.parts[2] + np.swapaxes(J.parts[2], -1, -2))
    folded = jets.einsum("A,AB,B->", x, M, x)
    stepwise = jets.einsum("B,B->", jets.einsum("A,AB->B", x, M), x)
    assert_jets_close(folded, stepwise, 1e-12)


def test_inverse_of_metric_like_matrix():
    m = [[1 + U[0] ** 2, U[0] * U[1]], [U[0] * U[1], 2 + sp.sin(U[1]) ** 2]]
    flat = [e for row in m for e in row]
    J = sympy_jet(flat, U, GRID, 3)
    J = jets.Jet([p.reshape(GRID.shape + (2, 2) + p.shape[len(GRID.shape) + 1:]) for p in J.parts], 2)
    inv = sp.Matrix(m).inv()
    want = sympy_jet([sp.simplify(e) for e in inv], U, GRID, 3)
    want = jets.Jet([p.reshape(J.parts[i].shape) for i, p in enumerate(want.parts)], 2)
    assert_jets_close(jets.inverse(J), want, 1e-9)


def test_separable_matches_product():
    f = sp.cos(2 * U[0]) * sp.exp(U[1])
    fa = np.stack([np.cos(2 * GRID.axes[0] + d * np.pi / 2) * 2.0**d for d in range(4)])
    fb = np.stack([np.exp(GRID.axes[1])] * 4)
    assert_jets_close(jets.separable([fa, fb], 3), sympy_jet(f, U, GRID, 3))


def test_stack_and_component_are_inverse():
    a, b = sympy_jet(U[0] * U[1], U, GRID, 2), sympy_jet(sp.sin(U[1]), U, GRID, 2)
    s = jets.stack([a, b])
    assert_jets_close(s.component(0, 1), b)


def test_truncate_refuses_raising_order():
    a = sympy_jet(U[0], U, GRID, 2)
    with pytest.raises(ValueError):
        a.truncate(3)


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_linearity(alpha, beta):
    a = sympy_jet(sp.sin(U[0]) * U[1], U, GRID, 2)
    b = sympy_jet(U[0] ** 2 - U[1], U, GRID, 2)
    got = a * alpha + b * beta
    want = sympy_jet(alpha * sp.sin(U[0]) * U[1] + beta * (U[0] ** 2 - U[1]), U, GRID, 2)
    assert_jets_close(got, want, 1e-9)
