"""Explicit Lagrangian translating solitons in C^n with closed-form jets.

Each complex line ``(x_k, y_k)`` carries either a flat axis ``y_k = 0`` or a
grim reaper ``y_k = -(1/c) log cos(c u_k)``, which translates with speed ``c``
in the ``y_k`` direction.  Products of such curves in orthogonal complex lines
are Lagrangian, and the translation vectors of the factors add up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import SolitonLabError
from .patch import (
    ANALYTIC,
    AmbientStructure,
    Chart,
    ImmersedPatch,
    ParameterGrid,
    build_patch,
    project,
    sup_interior,
)

FLAT_PLANE = "flat-plane"
GRIM_REAPER_CYLINDER = "grim-reaper-cylinder"
GRIM_REAPER_PRODUCT = "grim-reaper-product"
CATALOG = (FLAT_PLANE, GRIM_REAPER_CYLINDER, GRIM_REAPER_PRODUCT)

# default windows cover this fraction of the admissible symmetric interval
WINDOW_FRACTION = 0.8
JET_ORDER = 4


def grim_reaper_profile(u: np.ndarray, c: float, order: int) -> np.ndarray:
    """Derivatives 0..order of ``y(u) = -log(cos(c u)) / c``."""
    cu = c * u
    sec2 = 1.0 / np.cos(cu) ** 2
    tan = np.tan(cu)
    derivs = [
        -np.log(np.cos(cu)) / c,
        tan,
        c * sec2,
        2 * c**2 * sec2 * tan,
        c**3 * (4 * sec2 * tan**2 + 2 * sec2**2),
    ]
    if order >= len(derivs):
        raise SolitonLabError(f"grim reaper jets available to order {len(derivs) - 1}")
    return np.stack(derivs[: order + 1])


def _curve_product_chart(speeds: Sequence[Optional[float]], name: str) -> Chart:
    """Chart ``u -> (u_1, y_1(u_1), ..., u_n, y_n(u_n))``; ``None`` speed means a flat factor."""
    n = len(speeds)
    N = 2 * n

    def profile(uk, c, order):
        if c is None:
            return np.zeros((order + 1,) + uk.shape)
        return grim_reaper_profile(uk, c, order)

    def position(u):
        X = np.empty(u.shape[:-1] + (N,))
        for k, c in enumerate(speeds):
            X[..., 2 * k] = u[..., k]
            X[..., 2 * k + 1] = profile(u[..., k], c, 0)[0]
        return X

    def chart_jets(u, order):
        grid = u.shape[:-1]
        parts = [position(u)]
        for d in range(1, order + 1):
            parts.append(np.zeros(grid + (N,) + (n,) * d))
        for k, c in enumerate(speeds):
            prof = profile(u[..., k], c, order)
            parts[1][(..., 2 * k, k)] = 1.0
            for d in range(1, order + 1):
                parts[d][(..., 2 * k + 1) + (k,) * d] = prof[d]
        return parts

    return Chart(position, N, chart_jets, lagrangian=True, name=name)


@dataclass(frozen=True)
class SolitonSpec:
    """Catalog entry plus the discretisation it is sampled at."""

    name: str
    n: int = 2
    speeds: tuple = ()
    window: tuple = ()
    resolution: int = 64
    translation: tuple = ()  # flat plane only; defaults to d/dx_1

    def __post_init__(self):
        if self.name not in CATALOG:
            raise SolitonLabError(
                f"unknown soliton {self.name!r}; available: {', '.join(CATALOG)}")
        if self.n < 1:
            raise SolitonLabError("dimension must be positive")
        speeds = tuple(float(c) for c in self.speeds)
        if self.name == GRIM_REAPER_PRODUCT:
            if not speeds:
                speeds = (1.0,) * self.n
            if len(speeds) != self.n:
                raise SolitonLabError(f"need {self.n} speeds, got {len(speeds)}")
            if any(not c > 0 for c in speeds):
                raise SolitonLabError("grim reaper speeds must be positive")
        elif speeds:
            raise SolitonLabError(f"{self.name} takes no speeds")
        object.__setattr__(self, "speeds", speeds)
        window = tuple(tuple(float(v) for v in w) for w in self.window) or self.default_window()
        if len(window) != self.n or any(len(w) != 2 for w in window):
            raise SolitonLabError(f"window needs {self.n} intervals")
        object.__setattr__(self, "window", window)
        object.__setattr__(self, "translation", tuple(float(t) for t in self.translation))
        for k, c in enumerate(self.factor_speeds):
            if c is None:
                continue
            limit = math.pi / (2 * c)
            a, b = window[k]
            if not (-limit < a and b < limit):
                raise SolitonLabError(
                    f"window [{a}, {b}] on axis {k} must lie inside (-pi/(2c), pi/(2c)) = "
                    f"({-limit:.6f}, {limit:.6f})")

    @property
    def factor_speeds(self) -> tuple:
        if self.name == GRIM_REAPER_PRODUCT:
            return self.speeds
        if self.name == GRIM_REAPER_CYLINDER:
            return (1.0,) + (None,) * (self.n - 1)
        return (None,) * self.n

    def default_window(self) -> tuple:
        out = []
        for c in self.factor_speeds:
            if c is None:
                out.append((0.0, 1.0))
            else:
                half = WINDOW_FRACTION * math.pi / (2 * c)
                out.append((-half, half))
        return tuple(out)

    @property
    def T(self) -> np.ndarray:
        T = np.zeros(2 * self.n)
        if self.name == FLAT_PLANE:
            if self.translation:
                T[:] = self.translation
            else:
                T[0] = 1.0
            return T
        for k, c in enumerate(self.factor_speeds):
            if c is not None:
                T[2 * k + 1] = c
        return T

    def with_resolution(self, resolution: int) -> "SolitonSpec":
        return SolitonSpec(self.name, self.n, self.speeds, self.window, resolution, self.translation)

    def to_text(self) -> str:
        """Plain ``key=value`` lines."""
        lines = [f"name={self.name}", f"n={self.n}"]
        lines.append("speeds=" + ",".join(repr(c) for c in self.speeds))
        lines.append("window=" + ";".join(f"{a!r},{b!r}" for a, b in self.window))
        lines.append(f"resolution={self.resolution}")
        lines.append("translation=" + ",".join(repr(t) for t in self.translation))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SolitonSpec":
        fields = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            fields[key.strip()] = value.strip()
        unknown = set(fields) - {"name", "n", "speeds", "window", "resolution", "translation"}
        if unknown:
            raise SolitonLabError(f"unknown soliton spec keys: {sorted(unknown)}")
        return cls(
            name=fields["name"],
            n=int(fields.get("n", 2)),
            speeds=_floats(fields.get("speeds", "")),
            window=tuple(_floats(w) for w in fields.get("window", "").split(";") if w.strip()),
            resolution=int(fields.get("resolution", 64)),
            translation=_floats(fields.get("translation", "")),
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "speeds": list(self.speeds),
            "window": [list(w) for w in self.window],
            "resolution": self.resolution,
            "translation": list(self.translation),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SolitonSpec":
        return cls(d["name"], d["n"], tuple(d.get("speeds", ())),
                   tuple(tuple(w) for w in d.get("window", ())),
                   d.get("resolution", 64), tuple(d.get("translation", ())))

    def build(self, backend: str = ANALYTIC) -> ImmersedPatch:
        if self.name == FLAT_PLANE:
            return make_flat_plane(self.n, self.T, self.window, self.resolution, backend)
        if self.name == GRIM_REAPER_CYLINDER:
            return make_grim_reaper_cylinder(self.n, self.window, self.resolution, backend)
        return make_grim_reaper_product(self.speeds, self.window, self.resolution, backend)


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _build(chart, window, resolution, T, backend):
    grid = ParameterGrid.uniform(window, resolution)
    return build_patch(chart, grid, AmbientStructure(len(T), T), backend, order=JET_ORDER)


def make_flat_plane(n: int, T, window, resolution: int = 64, backend: str = ANALYTIC) -> ImmersedPatch:
    """The plane ``{y = 0}``; a soliton only for ``T`` tangent to it."""
    T = np.asarray(T, dtype=float)
    if T.shape != (2 * n,):
        raise SolitonLabError(f"translation vector must have {2 * n} components")
    if np.any(T[1::2]):
        raise SolitonLabError("T has a normal component; the flat plane is then not a soliton")
    return _build(_curve_product_chart((None,) * n, FLAT_PLANE), tuple(window), resolution, T, backend)


def make_grim_reaper_cylinder(n: int, window, resolution: int = 64,
                              backend: str = ANALYTIC) -> ImmersedPatch:
    spec = SolitonSpec(GRIM_REAPER_CYLINDER, n, window=window, resolution=resolution)
    chart = _curve_product_chart(spec.factor_speeds, GRIM_REAPER_CYLINDER)
    return _build(chart, spec.window, resolution, spec.T, backend)


def make_grim_reaper_product(speeds, window, resolution: int = 64,
                             backend: str = ANALYTIC) -> ImmersedPatch:
    spec = SolitonSpec(GRIM_REAPER_PRODUCT, len(speeds), tuple(speeds), window, resolution)
    chart = _curve_product_chart(spec.speeds, GRIM_REAPER_PRODUCT)
    return _build(chart, spec.window, resolution, spec.T, backend)


def flat_plane_with_translation(n: int, T, window, resolution: int = 64,
                                backend: str = ANALYTIC) -> ImmersedPatch:
    """Flat plane paired with an arbitrary ``T``; used to exercise non-solitons."""
    chart = _curve_product_chart((None,) * n, FLAT_PLANE)
    return _build(chart, tuple(window), resolution, np.asarray(T, dtype=float), backend)


def soliton_residual(patch: ImmersedPatch, T=None):
    """Sup and weighted L2 norms of ``H - T_perp`` over interior nodes."""
    from .operators import weighted_l2

    T = patch.T if T is None else np.asarray(T, dtype=float)
    H = patch.mean_curvature_jet.value
    _, Tperp = project(patch, T)
    R = H - Tperp
    return sup_interior(patch, R), weighted_l2(patch, R, T)
