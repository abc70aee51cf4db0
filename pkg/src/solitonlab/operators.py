"""Drifted Laplacian, stability operator, Hamiltonian fields and weighted quadrature.

Scalar and normal fields are carried as jets over the parameter grid, so every
operator here is an exact pointwise formula in the chart derivatives.  The
weighted measure is ``e^<T,x> dmu`` discretised by the composite trapezoid rule;
reductions go through :func:`math.fsum` in C (lexicographic) node order, which
makes every reported number independent of summation scheduling.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import jets
from .errors import SolitonLabError, UnsupportedOperation
from .jets import Jet
from .patch import ImmersedPatch, ParameterGrid

# f_value and all variational checks use this many extra layers beyond the stencil margin
DEFAULT_BUMP_MARGIN = 3


@dataclass
class ScalarField:
    """Function on the patch with its parameter-space jet.

    ``support_margin`` is ``None`` for fields living on the full window, or
    the number of node layers next to every face on which the field vanishes.
    """

    jet: Jet
    support_margin: Optional[int] = None

    @property
    def values(self) -> np.ndarray:
        return self.jet.value

    @property
    def compact(self) -> bool:
        return self.support_margin is not None

    def __mul__(self, other: "ScalarField") -> "ScalarField":
        margins = [m for m in (self.support_margin, other.support_margin) if m is not None]
        return ScalarField(self.jet * other.jet, max(margins) if margins else None)


@dataclass
class NormalField:
    jet: Jet
    support_margin: Optional[int] = None

    @property
    def values(self) -> np.ndarray:
        return self.jet.value


def _jet(f):
    if isinstance(f, (ScalarField, NormalField)):
        return f.jet
    return f


def _require_lagrangian(patch: ImmersedPatch, what: str):
    if not patch.lagrangian:
        raise UnsupportedOperation(f"{what} is only available on Lagrangian patches")


# --- quadrature -----------------------------------------------------------

def weighted_measure(patch: ImmersedPatch, T=None) -> np.ndarray:
    """Per-node weight ``e^<T,x> sqrt(det g)`` times the trapezoid cell weight."""
    T = patch.T if T is None else np.asarray(T, dtype=float)
    cell = patch.grid.trapezoid_weights()
    w = np.zeros(patch.grid.shape)
    m = cell > 0
    g = patch.metric_jet.value[m]
    x = patch.X.value[m]
    w[m] = np.exp(x @ T) * np.sqrt(np.linalg.det(g)) * cell[m]
    return w


def window_measure(patch: ImmersedPatch, T=None) -> np.ndarray:
    """Like ``weighted_measure`` but over the whole window.

    Only first derivatives enter the area density, so where the position jet
    has none the finite-difference backend falls back to second-order
    one-sided differences.
    """
    if patch.grid.margin == 0:
        return weighted_measure(patch, T)
    T = patch.T if T is None else np.asarray(T, dtype=float)
    x = patch.X.value
    E = patch.X.parts[1]
    edge = np.stack([np.gradient(x, h, axis=i, edge_order=2)
                     for i, h in enumerate(patch.grid.spacing)], axis=-1)
    E = np.where(np.isfinite(E), E, edge)
    g = np.einsum("...Ai,...Aj->...ij", E, E)
    cell = patch.grid.with_margin(0).trapezoid_weights()
    return np.exp(x @ T) * np.sqrt(np.linalg.det(g)) * cell


def _fsum(a: np.ndarray) -> float:
    return math.fsum(np.ravel(a, order="C").tolist())


def weighted_integral(patch: ImmersedPatch, T, integrand) -> float:
    """``int integrand e^<T,x> dmu`` over the window (composite trapezoid)."""
    w = weighted_measure(patch, T)
    vals = np.broadcast_to(np.asarray(integrand, dtype=float), patch.grid.shape)
    used = w > 0
    if not np.all(np.isfinite(vals[used])):
        raise SolitonLabError("integrand is undefined at some quadrature node")
    return _fsum(np.where(used, w * np.where(used, vals, 0.0), 0.0))


def weighted_l2(patch: ImmersedPatch, R, T=None) -> float:
    """Weighted L2 norm of a scalar or vector field; nodes without data are skipped."""
    R = np.asarray(R, dtype=float)
    sq = R**2 if R.ndim == patch.n else np.sum(R.reshape(patch.grid.shape + (-1,)) ** 2, axis=-1)
    w = weighted_measure(patch, T)
    ok = (w > 0) & np.isfinite(sq)
    return math.sqrt(_fsum(np.where(ok, w * np.where(ok, sq, 0.0), 0.0)))


def inner(U, V) -> np.ndarray:
    """Pointwise ambient inner product of vector-valued arrays or fields."""
    return np.einsum("...A,...A->...", _values(U), _values(V))


def _values(F):
    F = _jet(F)
    return F.value if isinstance(F, Jet) else np.asarray(F, dtype=float)


# --- scalar operators -----------------------------------------------------

def gradient(patch: ImmersedPatch, f) -> Jet:
    """Tangent vector ``g^ij d_j f X_i`` as an ambient-vector jet."""
    df = _jet(f).grad()
    k = min(df.order, patch.frame.order)
    return jets.einsum("Aa,ab,b->A", patch.frame.truncate(k),
                       patch.inverse_metric_jet.truncate(k), df.truncate(k))


def laplacian(patch: ImmersedPatch, f) -> Jet:
    """Laplace-Beltrami ``g^ij (f_ij - Gamma^k_ij f_k)``."""
    f = _jet(f)
    d2 = f.grad().grad()
    k = min(d2.order, patch.christoffel_jet.order)
    ginv = patch.inverse_metric_jet.truncate(k)
    gam = patch.christoffel_jet.truncate(k)
    return jets.einsum("ij,ij->", ginv, d2.truncate(k)) - jets.einsum(
        "ij,kij,k->", ginv, gam, f.grad().truncate(k))


def drift(patch: ImmersedPatch, T, f) -> Jet:
    """``<T, grad f>``."""
    return jets.einsum("A,A->", gradient(patch, f), np.asarray(T, dtype=float))


def drifted_laplacian(patch: ImmersedPatch, T, f) -> ScalarField:
    """Non-divergence form ``Delta f + <T, grad f>``."""
    T = patch.T if T is None else T
    lap = laplacian(patch, f)
    return ScalarField(lap + drift(patch, T, f), _margin(f))


def _margin(f):
    return getattr(f, "support_margin", None)


def coordinate_function(patch: ImmersedPatch, A: int) -> ScalarField:
    """The ambient coordinate ``x^A`` restricted to the patch."""
    return ScalarField(patch.X.component(0, A))


def constant_function(patch: ImmersedPatch, c: float = 1.0, order: int = 3) -> ScalarField:
    return ScalarField(Jet.constant(c, patch.grid.shape, order))


# --- normal-bundle operators ----------------------------------------------

def constant_normal(patch: ImmersedPatch, y) -> NormalField:
    """Normal part ``y_perp`` of a constant ambient vector, with its jet."""
    Q = patch.normal_projector
    return NormalField(jets.einsum("AB,B->A", Q, np.asarray(y, dtype=float)))


def mean_curvature_field(patch: ImmersedPatch) -> NormalField:
    return NormalField(patch.mean_curvature_jet)


def normal_connection(patch: ImmersedPatch, V, direction: Optional[int] = None) -> Jet:
    """``nabla^perp_i V`` = normal part of ``d_i V``; tensor axes ``(A, i)``."""
    dV = _jet(V).grad()
    k = min(dV.order, patch.normal_projector.order)
    extra = "pqrs"[: dV.value.ndim - patch.n - 1]  # tensor axes V already carries, plus i
    out = jets.einsum(f"AB,B{extra}->A{extra}", patch.normal_projector.truncate(k), dV.truncate(k))
    return out if direction is None else out.component(1, direction)


def normal_laplacian(patch: ImmersedPatch, V) -> Jet:
    """``Delta^perp V = g^ij (nabla_i nabla_j V - Gamma^k_ij nabla_k V)``."""
    first = normal_connection(patch, V)
    second = normal_connection(patch, first)  # (A, j, i) = nabla_i nabla_j V
    k = min(second.order, patch.christoffel_jet.order)
    ginv = patch.inverse_metric_jet.truncate(k)
    return jets.einsum("ji,Aji->A", ginv, second.truncate(k)) - jets.einsum(
        "ij,kij,Ak->A", ginv, patch.christoffel_jet.truncate(k), first.truncate(k))


def stability_operator(patch: ImmersedPatch, T, V) -> NormalField:
    """``LV = Delta^perp V + nabla^perp_{T^T} V + <<A, V>, A>``."""
    _require_lagrangian(patch, "the stability operator")
    T = patch.T if T is None else np.asarray(T, dtype=float)
    margin = _margin(V)
    V = _jet(V)
    lap = normal_laplacian(patch, V)
    k = lap.order
    nab = normal_connection(patch, V).truncate(k)
    E = patch.frame.truncate(k)
    ginv = patch.inverse_metric_jet.truncate(k)
    h = patch.sff_jet.truncate(k)
    Vk = V.truncate(k)
    # T^T = t^a X_a with t^a = g^ab <T, X_b>
    drift_term = jets.einsum("ab,b,Aa->A", ginv, jets.einsum("Bb,B->b", E, T), nab)
    hv = jets.einsum("Bij,B->ij", h, Vk)
    curv = jets.einsum("ik,jl,ij,Akl->A", ginv, ginv, hv, h)
    return NormalField(lap + drift_term + curv, margin)


def hamiltonian_field(patch: ImmersedPatch, f) -> NormalField:
    """``V = J grad f``; normal because the patch is Lagrangian."""
    _require_lagrangian(patch, "a Hamiltonian variation")
    grad = gradient(patch, f)
    return NormalField(jets.einsum("AB,B->A", patch.ambient.J, grad), _margin(f))


# --- cutoffs and potentials -----------------------------------------------

def bump_profile(t: np.ndarray, order: int = 3) -> np.ndarray:
    """``chi(t) = exp(1 - 1/(1-t^2))`` on ``|t| < 1`` and its t-derivatives 0..order."""
    if order > 4:
        raise SolitonLabError("bump jets available to order 4")
    t = np.asarray(t, dtype=float)
    inside = np.abs(t) < 1
    ts = np.where(inside, t, 0.0)
    r = 1.0 / (1.0 - ts**2)
    # derivatives of r = 1/(1-t^2); phi = 1 - r
    r1 = 2 * ts * r**2
    r2 = 2 * r**2 + 8 * ts**2 * r**3
    r3 = 24 * ts * r**3 + 48 * ts**3 * r**4
    r4 = 24 * r**3 + 288 * ts**2 * r**4 + 384 * ts**4 * r**5
    p1, p2, p3, p4 = -r1, -r2, -r3, -r4
    chi = np.exp(1.0 - r)
    derivs = [
        chi,
        chi * p1,
        chi * (p2 + p1**2),
        chi * (p3 + 3 * p1 * p2 + p1**3),
        chi * (p4 + 4 * p1 * p3 + 3 * p2**2 + 6 * p1**2 * p2 + p1**4),
    ]
    return np.where(inside, np.stack(derivs[: order + 1]), 0.0)


def _bump_factors(grid: ParameterGrid, margin: int, order: int):
    factors = []
    for ax, a, b, h, m in zip(grid.axes, grid.lower, grid.upper, grid.spacing, grid.nodes):
        lo, hi = a + margin * h, b - margin * h
        if m - 2 * margin < 3:
            raise SolitonLabError(f"bump margin {margin} leaves no support on a {m}-node axis")
        centre, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        t = (ax - centre) / half
        prof = bump_profile(t, order)
        prof *= (1.0 / half) ** np.arange(order + 1)[:, None]
        # nodes on or beyond the support edge are exactly zero
        idx = np.arange(m)
        prof[:, (idx <= margin) | (idx >= m - 1 - margin)] = 0.0
        factors.append(prof)
    return factors


def cutoff_bump(grid: ParameterGrid, margin: int = DEFAULT_BUMP_MARGIN, order: int = 3) -> ScalarField:
    """Tensor product of smooth bumps vanishing within ``margin`` layers of every face."""
    if margin < grid.margin + 1:
        raise SolitonLabError(f"bump margin must be at least {grid.margin + 1} for this grid")
    return ScalarField(jets.separable(_bump_factors(grid, margin, order), order), margin)


def _trig_basis(grid: ParameterGrid, degree: int, order: int):
    """Per-axis stack ``[1, cos(k th), sin(k th)]_{k<=degree}``, ``th = pi (u-a)/(b-a)``."""
    out = []
    for ax, a, b in zip(grid.axes, grid.lower, grid.upper):
        om = math.pi / (b - a)
        th = om * (ax - a)
        rows = [np.stack([np.ones_like(ax)] + [np.zeros_like(ax)] * order)]
        for k in range(1, degree + 1):
            w = k * om
            for phase in (0.0, -0.5 * math.pi):  # cos, then sin
                rows.append(np.stack([w**d * np.cos(k * th + phase + 0.5 * math.pi * d)
                                      for d in range(order + 1)]))
        out.append(np.stack(rows))  # (basis, order+1, m)
    return out


def trig_polynomial(grid: ParameterGrid, coeffs: np.ndarray, order: int = 3) -> Jet:
    """Jet of ``sum_t c_t prod_a basis_{t_a}(u_a)`` for a coefficient tensor ``coeffs``."""
    degree = (coeffs.shape[0] - 1) // 2
    basis = _trig_basis(grid, degree, order)
    n = grid.n
    parts = []
    for d in range(order + 1):
        part = np.empty(grid.shape + (n,) * d)
        for idx in itertools.product(range(n), repeat=d):
            counts = [idx.count(a) for a in range(n)]
            acc = coeffs
            # contract one coefficient axis at a time with that axis' derivative table
            for a in range(n):
                acc = np.tensordot(acc, basis[a][:, counts[a], :], axes=([0], [0]))
            part[(...,) + idx] = acc
        parts.append(part)
    return Jet(parts, n)


def random_potential(grid: ParameterGrid, rng: np.random.Generator, degree: int = 3,
                     margin: int = DEFAULT_BUMP_MARGIN, order: int = 3) -> ScalarField:
    """Bump times a trigonometric polynomial with uniform[-1, 1] coefficients."""
    coeffs = rng.uniform(-1.0, 1.0, size=(2 * degree + 1,) * grid.n)
    poly = trig_polynomial(grid, coeffs, order)
    return cutoff_bump(grid, margin, order) * ScalarField(poly)
