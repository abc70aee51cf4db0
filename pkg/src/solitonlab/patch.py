"""Immersed patches on tensor-product parameter grids and their pointwise geometry.

Everything is expressed in the coordinate frame ``X_i = dX/du_i`` with metric
contractions; no orthonormalisation is performed.  Ambient coordinates are
interleaved as ``(x1, y1, ..., xn, yn)`` with ``J dx_k = dy_k``.

Jets of the position carry derivative axes after the ambient axis, so
``X.parts[2][..., A, i, j]`` is ``d^2 X^A / du_i du_j``.
"""

from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np

from . import jets
from .errors import DegenerateMetricError, SolitonLabError, UnsupportedOperation
from .jets import Jet

DET_FLOOR = 1e-12
MIN_NODES = 5
FD_MARGIN = 2
ANALYTIC = "analytic"
FINITE_DIFFERENCE = "fd"
BACKENDS = (ANALYTIC, FINITE_DIFFERENCE)


@dataclass(frozen=True)
class ParameterGrid:
    """Uniform tensor-product grid over the box ``prod [lower_i, upper_i]``."""

    lower: tuple
    upper: tuple
    nodes: tuple
    margin: int = 0

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(float(a) for a in self.lower))
        object.__setattr__(self, "upper", tuple(float(b) for b in self.upper))
        object.__setattr__(self, "nodes", tuple(int(m) for m in self.nodes))
        if not (len(self.lower) == len(self.upper) == len(self.nodes)) or not self.nodes:
            raise SolitonLabError("grid bounds and node counts must agree in length")
        for a, b, m in zip(self.lower, self.upper, self.nodes):
            if m < MIN_NODES:
                raise SolitonLabError(f"need at least {MIN_NODES} nodes per axis, got {m}")
            if not b > a:
                raise SolitonLabError(f"empty parameter interval [{a}, {b}]")
        if self.margin < 0 or any(m < 2 * self.margin + 1 for m in self.nodes):
            raise SolitonLabError(f"grid too small for a stencil margin of {self.margin}")

    @classmethod
    def uniform(cls, window: Sequence[Sequence[float]], resolution: int, margin: int = 0):
        """``resolution`` cells per axis, i.e. ``resolution + 1`` nodes."""
        window = [tuple(w) for w in window]
        return cls(
            tuple(w[0] for w in window),
            tuple(w[1] for w in window),
            (resolution + 1,) * len(window),
            margin,
        )

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def shape(self) -> tuple:
        return self.nodes

    @property
    def spacing(self) -> tuple:
        return tuple((b - a) / (m - 1) for a, b, m in zip(self.lower, self.upper, self.nodes))

    @property
    def axes(self) -> list:
        return [np.linspace(a, b, m) for a, b, m in zip(self.lower, self.upper, self.nodes)]

    def coordinates(self) -> np.ndarray:
        """Parameter coordinates, shape ``grid + (n,)``."""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    def layer(self) -> np.ndarray:
        """Distance in nodes from each node to the nearest face."""
        dist = [np.minimum(np.arange(m), np.arange(m)[::-1]) for m in self.nodes]
        out = dist[0]
        for d in dist[1:]:
            out = np.minimum.outer(out, d)
        return np.asarray(out).reshape(self.nodes)

    @property
    def interior(self) -> np.ndarray:
        return self.layer() >= self.margin

    def trapezoid_weights(self) -> np.ndarray:
        """Composite trapezoid weights over the interior sub-box, zero outside it."""
        r = self.margin
        per_axis = []
        for h, m in zip(self.spacing, self.nodes):
            w = np.zeros(m)
            w[r : m - r] = h
            w[r] *= 0.5
            w[m - 1 - r] *= 0.5
            per_axis.append(w)
        out = per_axis[0]
        for w in per_axis[1:]:
            out = np.multiply.outer(out, w)
        return np.asarray(out).reshape(self.nodes)

    def with_margin(self, margin: int) -> "ParameterGrid":
        return dataclasses.replace(self, margin=margin)


def complex_structure(N: int) -> np.ndarray:
    """Matrix of J on interleaved coordinates: ``J e_{2k} = e_{2k+1}``, ``J e_{2k+1} = -e_{2k}``."""
    if N % 2:
        raise UnsupportedOperation(f"odd ambient dimension {N} has no complex structure")
    J = np.zeros((N, N))
    for k in range(N // 2):
        J[2 * k + 1, 2 * k] = 1.0
        J[2 * k, 2 * k + 1] = -1.0
    return J


@dataclass(frozen=True)
class AmbientStructure:
    N: int
    T: np.ndarray

    def __post_init__(self):
        T = np.asarray(self.T, dtype=float).reshape(-1)
        if T.shape != (self.N,):
            raise SolitonLabError(f"translation vector must have {self.N} components")
        if not np.any(T):
            raise SolitonLabError("translation vector must be nonzero")
        object.__setattr__(self, "T", T)

    @property
    def J(self) -> np.ndarray:
        return complex_structure(self.N)

    def omega(self, U, V) -> np.ndarray:
        """Symplectic form ``<JU, V>`` on trailing ambient axes."""
        return np.einsum("...A,...A->...", np.einsum("AB,...B->...A", self.J, U), V)


@dataclass(frozen=True)
class Chart:
    """Map from the parameter box into R^N.

    ``position(u)`` maps ``grid + (n,)`` coordinates to ``grid + (N,)``.  When
    ``jets(u, order)`` is given it must return the parts of the position jet.
    """

    position: Callable[[np.ndarray], np.ndarray]
    N: int
    jets: Optional[Callable[[np.ndarray, int], list]] = None
    lagrangian: bool = False
    name: str = "chart"


def finite_difference_jet(X: np.ndarray, grid: ParameterGrid, order: int = 4) -> Jet:
    """Central-difference jet of sampled positions; undefined nodes hold NaN.

    First and second partials use three-point stencils (valid one layer in),
    third partials difference the second (two layers), fourth difference the
    third (three layers).  Higher blocks are symmetrised.
    """
    n = grid.n
    h = grid.spacing

    def shifted(a, axis, k):
        out = np.full_like(a, np.nan)
        src = [slice(None)] * a.ndim
        dst = [slice(None)] * a.ndim
        if k > 0:
            src[axis], dst[axis] = slice(k, None), slice(None, -k)
        else:
            src[axis], dst[axis] = slice(None, k), slice(-k, None)
        out[tuple(dst)] = a[tuple(src)]
        return out

    def central(a, axis):
        return (shifted(a, axis, 1) - shifted(a, axis, -1)) / (2 * h[axis])

    parts = [X]
    d1 = np.stack([central(X, i) for i in range(n)], axis=-1)
    parts.append(d1)
    if order >= 2:
        d2 = np.empty(X.shape + (n, n))
        for i in range(n):
            d2[..., i, i] = (shifted(X, i, 1) - 2 * X + shifted(X, i, -1)) / h[i] ** 2
            for j in range(i + 1, n):
                d2[..., i, j] = central(central(X, i), j)
                d2[..., j, i] = d2[..., i, j]
        parts.append(d2)
    for d in range(3, order + 1):
        prev = parts[-1]
        raw = np.stack([central(prev, k) for k in range(n)], axis=-1)
        parts.append(_symmetrize(raw, d))
    return Jet(parts, n)


def _symmetrize(a: np.ndarray, d: int) -> np.ndarray:
    base = a.ndim - d
    perms = list(itertools.permutations(range(d)))
    acc = np.zeros_like(a)
    for p in perms:
        acc += np.transpose(a, list(range(base)) + [base + q for q in p])
    return acc / len(perms)


class ImmersedPatch:
    """A sampled immersion with its position jet and derived tensors (cached)."""

    def __init__(self, grid: ParameterGrid, ambient: AmbientStructure, X: Jet,
                 backend: str, lagrangian: bool, name: str = "patch"):
        if backend not in BACKENDS:
            raise SolitonLabError(f"unknown backend {backend!r}")
        self.grid = grid
        self.ambient = ambient
        self.X = X
        self.backend = backend
        self.lagrangian = lagrangian
        self.name = name

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def N(self) -> int:
        return self.ambient.N

    @property
    def T(self) -> np.ndarray:
        return self.ambient.T

    @property
    def interior(self) -> np.ndarray:
        return self.grid.interior

    # geometry jets; orders follow from the position jet order

    @cached_property
    def frame(self) -> Jet:
        """Coordinate tangent vectors, tensor axes ``(A, a)``."""
        return self.X.grad()

    @cached_property
    def metric_jet(self) -> Jet:
        return jets.einsum("Aa,Ab->ab", self.frame, self.frame)

    @cached_property
    def inverse_metric_jet(self) -> Jet:
        return _safe_inverse(self.metric_jet)

    @cached_property
    def christoffel_jet(self) -> Jet:
        """``Gamma^k_ij`` with tensor axes ``(k, i, j)``, from metric derivatives."""
        dg = self.metric_jet.grad()  # (a, b, c) = d_c g_ab
        # Gamma_{l,ij} = (d_i g_jl + d_j g_il - d_l g_ij) / 2
        first = 0.5 * (dg.permute((1, 2, 0)) + dg.permute((1, 0, 2)) - dg.permute((2, 0, 1)))
        ginv = self.inverse_metric_jet.truncate(first.order)
        return jets.einsum("kl,lij->kij", ginv, first)

    @cached_property
    def tangent_projector(self) -> Jet:
        return jets.einsum("Aa,ab,Bb->AB", self.frame, self.inverse_metric_jet, self.frame)

    @cached_property
    def normal_projector(self) -> Jet:
        P = self.tangent_projector
        eye = np.broadcast_to(np.eye(self.N), P.value.shape)
        return Jet([eye - P.parts[0]] + [-p for p in P.parts[1:]], self.n)

    @cached_property
    def sff_jet(self) -> Jet:
        """``h(X_i, X_j)`` as ambient vectors, tensor axes ``(A, i, j)``."""
        return jets.einsum("AB,Bij->Aij", self.normal_projector, self.frame.grad())

    @cached_property
    def mean_curvature_jet(self) -> Jet:
        h = self.sff_jet
        return jets.einsum("ij,Aij->A", self.inverse_metric_jet.truncate(h.order), h)

    def tangent_part(self, W):
        return _apply(self.tangent_projector, W)

    def normal_part(self, W):
        return _apply(self.normal_projector, W)

    def check_immersion(self, label="patch", s=None):
        det = np.full(self.grid.shape, np.nan)
        det[self.interior] = np.linalg.det(self.metric_jet.value[self.interior])
        bad = self.interior & ~(det > DET_FLOOR)
        if np.any(bad):
            node = tuple(int(i) for i in np.argwhere(bad)[0])
            u = tuple(float(ax[i]) for ax, i in zip(self.grid.axes, node))
            where = f" at s={s}" if s is not None else ""
            raise DegenerateMetricError(
                f"{label}: degenerate metric (det g <= {DET_FLOOR:g}) at node {node}, u={u}{where}",
                node=node, s=s,
            )


def _safe_inverse(g: Jet) -> Jet:
    # nodes without data (finite-difference margin) stay NaN; inv() must not see them
    bad = ~np.isfinite(g.value).all(axis=(-2, -1))
    if not bad.any():
        return jets.inverse(g)
    parts = [p.copy() for p in g.parts]
    parts[0][bad] = np.eye(g.value.shape[-1])
    with np.errstate(invalid="ignore"):
        out = jets.inverse(Jet(parts, g.n))
    out.parts[0][bad] = np.nan
    return out


def _apply(op: Jet, W):
    if isinstance(W, Jet):
        return jets.einsum("AB,B->A", op.truncate(min(op.order, W.order)), W)
    return np.einsum("...AB,...B->...A", op.value, W)


def build_patch(chart: Chart, grid: ParameterGrid, ambient: AmbientStructure,
                backend: Optional[str] = None, order: int = 4) -> ImmersedPatch:
    """Sample ``chart`` on ``grid`` and return a validated patch.

    The analytic backend needs ``chart.jets``; the finite-difference backend
    uses positions only and leaves a two-layer stencil margin.
    """
    if chart.N != ambient.N:
        raise SolitonLabError("chart and ambient dimensions differ")
    if backend is None:
        backend = ANALYTIC if chart.jets is not None else FINITE_DIFFERENCE
    u = grid.coordinates()
    if backend == ANALYTIC:
        if chart.jets is None:
            raise SolitonLabError("analytic backend needs a chart with jets")
        grid = grid.with_margin(0)
        X = Jet(chart.jets(u, order), grid.n)
    elif backend == FINITE_DIFFERENCE:
        grid = grid.with_margin(FD_MARGIN)
        X = finite_difference_jet(np.asarray(chart.position(u), dtype=float), grid, order)
    else:
        raise SolitonLabError(f"unknown backend {backend!r}")
    if chart.lagrangian and ambient.N != 2 * grid.n:
        raise SolitonLabError("a Lagrangian patch needs N = 2n")
    patch = ImmersedPatch(grid, ambient, X, backend, chart.lagrangian, chart.name)
    patch.check_immersion(chart.name)
    return patch


@dataclass
class MetricData:
    g: np.ndarray
    ginv: np.ndarray
    area_density: np.ndarray
    christoffel: np.ndarray


def metric_data(patch: ImmersedPatch) -> MetricData:
    g = patch.metric_jet.value
    with np.errstate(invalid="ignore"):
        density = np.sqrt(np.linalg.det(g))
    return MetricData(g, patch.inverse_metric_jet.value, density, patch.christoffel_jet.value)


@dataclass
class SffData:
    h: np.ndarray                 # (..., A, i, j) normal part of X_ij
    H: np.ndarray                 # (..., A) trace g^ij h_ij
    frame: Optional[np.ndarray] = None        # (..., A, a) = J X_a
    components: Optional[np.ndarray] = None   # (..., a, i, j) with h_ij = h^a_ij J X_a
    cubic: Optional[np.ndarray] = None        # (..., i, j, k) = <h_ij, J X_k>

    def framed(self):
        if self.components is None:
            raise UnsupportedOperation("framed second fundamental form needs a Lagrangian patch")
        return self.frame, self.components


def second_fundamental_form(patch: ImmersedPatch, metric: Optional[MetricData] = None) -> SffData:
    h = patch.sff_jet.value
    H = patch.mean_curvature_jet.value
    if not patch.lagrangian:
        return SffData(h, H)
    ginv = patch.inverse_metric_jet.value if metric is None else metric.ginv
    nu = np.einsum("AB,...Ba->...Aa", patch.ambient.J, patch.frame.value)
    cubic = np.einsum("...Aij,...Ak->...ijk", h, nu)
    comps = np.einsum("...ak,...ijk->...aij", ginv, cubic)
    return SffData(h, H, nu, comps, cubic)


def project(patch: ImmersedPatch, W: np.ndarray):
    """Split an ambient field into tangential and normal parts (``W = W_T + W_perp``)."""
    W = np.broadcast_to(np.asarray(W, dtype=float), patch.grid.shape + (patch.N,))
    WT = patch.tangent_part(W)
    return WT, W - WT


def lagrangian_defect(patch: ImmersedPatch) -> np.ndarray:
    """Per-node ``max_{i<j} |omega(X_i, X_j)|``."""
    if patch.N != 2 * patch.n:
        raise UnsupportedOperation("Lagrangian defect needs N = 2n")
    E = patch.frame.value
    JE = np.einsum("AB,...Ba->...Aa", patch.ambient.J, E)
    w = np.abs(np.einsum("...Aa,...Ab->...ab", JE, E))
    iu = np.triu_indices(patch.n, 1)
    if not len(iu[0]):
        return np.zeros(patch.grid.shape)
    return w[..., iu[0], iu[1]].max(axis=-1)


def sup_interior(patch: ImmersedPatch, field: np.ndarray) -> float:
    """Max over interior nodes of the pointwise norm; nodes lacking data (NaN) are skipped."""
    field = np.asarray(field, dtype=float)
    mag = field if field.ndim == patch.n else np.sqrt(
        np.sum(field.reshape(patch.grid.shape + (-1,)) ** 2, axis=-1))
    vals = mag[patch.interior]
    vals = vals[np.isfinite(vals)]
    return float(vals.max()) if vals.size else 0.0
