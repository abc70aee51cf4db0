"""Deformations, the weighted functional F and its variations.

The straight-line family ``X_s = X + s V`` is used for every s-derivative.  At
a critical point of F the second derivative does not depend on how the family
extends beyond first order: two families with the same initial velocity differ
by a first variation applied to their accelerations, and that vanishes when
``H = T_perp``.  This is why :func:`second_variation_fd` refuses non-solitons.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import operators as op
from .catalog import soliton_residual
from .errors import DegenerateMetricError, HypothesisViolation, SolitonLabError
from .jets import Jet
from .patch import ANALYTIC, ImmersedPatch, project, sup_interior

FD_STEP = 1e-3
CERTIFY_ANALYTIC = 1e-8
CERTIFY_FD_H2 = 10.0  # finite-difference certification: residual <= this * h^2

STRAIGHT_LINE_NOTE = (
    "straight-line family X + sV; at a critical point F'' is independent of the "
    "extension because the acceleration only enters through the vanishing first variation"
)


@dataclass
class CheckReport:
    check: str
    soliton: Optional[dict]
    resolutions: list
    backend: str
    sup_residual: float
    l2_residual: Optional[float]
    tolerance: float
    passed: bool
    order: Optional[float] = None
    wall_clock_seconds: Optional[float] = None
    seed: Optional[int] = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class DeformationFamily:
    base: ImmersedPatch
    V: op.NormalField

    def __post_init__(self):
        if self.V.support_margin is None:
            raise HypothesisViolation("variation field must be compactly supported")
        if self.V.support_margin < self.base.grid.margin + 1:
            raise HypothesisViolation("variation support reaches the stencil margin")

    def at(self, s: float) -> ImmersedPatch:
        return deform(self.base, self.V, s)


def max_spacing(patch: ImmersedPatch) -> float:
    return max(patch.grid.spacing)


def f_value(patch: ImmersedPatch, T=None) -> float:
    """Window value of ``int e^<T,x> dmu``."""
    return op._fsum(op.window_measure(patch, T))


def deform(patch: ImmersedPatch, V, s: float) -> ImmersedPatch:
    """Patch with position jet ``X + s V``; the metric is re-validated."""
    Vj = V.jet if isinstance(V, op.NormalField) else V
    margin = getattr(V, "support_margin", None)
    if margin is not None:
        # exactly zero off its support, even where stencils left NaN
        off = patch.grid.layer() < margin
        Vj = Jet([np.where(off.reshape(off.shape + (1,) * (p.ndim - off.ndim)), 0.0, p)
                  for p in Vj.parts], Vj.n)
    if s == 0 or all(not np.any(p) for p in Vj.parts):
        return patch
    X = patch.X.truncate(min(patch.X.order, Vj.order)) + s * Vj
    out = ImmersedPatch(patch.grid, patch.ambient, X, patch.backend, False, patch.name + "+sV")
    try:
        out.check_immersion(out.name, s=s)
    except DegenerateMetricError as exc:
        raise DegenerateMetricError(f"deformation step s={s} too large: {exc}", exc.node, s) from exc
    return out


def default_step(V, base: float = FD_STEP) -> float:
    vals = np.abs(V.values)
    vmax = float(np.nanmax(vals)) if np.nanmax(vals) > 0 else 1.0
    return base / vmax


def _require_compact(V, what="variation field"):
    if getattr(V, "support_margin", None) is None:
        raise HypothesisViolation(f"{what} must be compactly supported")


def first_variation_formula(patch: ImmersedPatch, T, V) -> float:
    """``int <T_perp - H, V> e^<T,x> dmu``."""
    T = patch.T if T is None else np.asarray(T, dtype=float)
    _, Tperp = project(patch, T)
    H = patch.mean_curvature_jet.value
    return op.weighted_integral(patch, T, op.inner(Tperp - H, V))


def first_variation_fd(patch: ImmersedPatch, T, V, s: float) -> float:
    return (f_value(deform(patch, V, s), T) - f_value(deform(patch, V, -s), T)) / (2 * s)


def first_variation_check(patch: ImmersedPatch, T, V, s: Optional[float] = None,
                          rel_tol: float = 1e-4, abs_tol: float = 1e-6) -> CheckReport:
    """Central difference of F against the first-variation integral."""
    start = time.perf_counter()
    _require_compact(V)
    T = patch.T if T is None else np.asarray(T, dtype=float)
    s = default_step(V) if s is None else s
    formula = first_variation_formula(patch, T, V)
    fd = first_variation_fd(patch, T, V, s)
    diff = abs(fd - formula)
    tol = max(abs_tol + 10 * s**2, rel_tol * abs(formula))
    return CheckReport(
        "first_variation", None, [patch.grid.nodes[0] - 1], patch.backend, diff, None, tol,
        bool(diff <= tol), wall_clock_seconds=time.perf_counter() - start,
        details={"fd": fd, "formula": formula, "s": s},
    )


def certify_soliton(patch: ImmersedPatch, T=None) -> float:
    sup, _ = soliton_residual(patch, T)
    limit = CERTIFY_ANALYTIC if patch.backend == ANALYTIC else CERTIFY_FD_H2 * max_spacing(patch) ** 2
    if not sup <= limit:
        raise HypothesisViolation(
            f"second variation is only meaningful at a critical point; "
            f"sup|H - T_perp| = {sup:.3e} exceeds {limit:.3e}")
    return sup


def second_variation_fd(patch: ImmersedPatch, T, V, s: Optional[float] = None,
                        certified: bool = False) -> float:
    """``(F(s) - 2 F(0) + F(-s)) / s^2`` along the straight-line family."""
    if not certified:
        certify_soliton(patch, T)
    _require_compact(V)
    if not np.any(np.nan_to_num(V.values)):
        return 0.0
    s = default_step(V) if s is None else s
    f0 = f_value(patch, T)
    return (f_value(deform(patch, V, s), T) - 2 * f0 + f_value(deform(patch, V, -s), T)) / s**2


def quadratic_form(patch: ImmersedPatch, T, V) -> float:
    """``-int <V, LV> e^<T,x> dmu``."""
    _require_compact(V)
    LV = op.stability_operator(patch, T, V)
    return -op.weighted_integral(patch, T, op.inner(V, LV))


def drifted_square_integral(patch: ImmersedPatch, T, f) -> float:
    Lf = op.drifted_laplacian(patch, T, f)
    return op.weighted_integral(patch, T, Lf.values**2)


def potential_scale(patch: ImmersedPatch, T, f) -> float:
    """``int (|f| + |grad f|^2) e^<T,x> dmu``; normalises nonnegativity tolerances."""
    g = op.gradient(patch, f).value
    return op.weighted_integral(patch, T, np.abs(f.values) + op.inner(g, g))


@dataclass
class HamiltonianSample:
    index: int
    fd: float
    quadratic_form: float
    drifted_square: float
    scale: float
    tolerance: float
    step: float

    @property
    def values(self):
        return (self.fd, self.quadratic_form, self.drifted_square)

    def agreement(self) -> float:
        a, b, c = self.values
        return max(abs(a - b), abs(b - c), abs(a - c))


def evaluate_hamiltonian(patch: ImmersedPatch, T, f, index: int = 0, s: Optional[float] = None,
                         agree_rel: float = 1e-6, agree_c: float = 10.0) -> HamiltonianSample:
    """All three forms of F'' for the Hamiltonian variation ``J grad f``."""
    V = op.hamiltonian_field(patch, f)
    if not np.any(np.nan_to_num(V.values)):
        # a constant potential: V = 0 is trivially compactly supported
        V.support_margin = patch.grid.margin + 1
    s = default_step(V) if s is None else s
    fd = second_variation_fd(patch, T, V, s, certified=True)
    qf = quadratic_form(patch, T, V)
    lf2 = drifted_square_integral(patch, T, f)
    scale = potential_scale(patch, T, f)
    h = max_spacing(patch)
    tol = max(agree_rel * scale, agree_c * (h**2 + s**2) * max(abs(fd), abs(qf), abs(lf2)))
    return HamiltonianSample(index, fd, qf, lf2, scale, tol, s)


def hamiltonian_stability_scan(patch: ImmersedPatch, T, k: int = 20, seed: int = 42,
                               s: Optional[float] = None, nonneg_rel: float = 1e-8,
                               agree_rel: float = 1e-6, agree_c: float = 10.0,
                               zero_tol: float = 1e-12) -> CheckReport:
    """Draw ``k`` seeded compactly supported potentials and compare the three forms of F''.

    The reported residual is the worst violation ratio over samples (agreement
    gap over its tolerance, or negative part over the nonnegativity allowance),
    so the check passes when it stays at or below 1.
    """
    start = time.perf_counter()
    T = patch.T if T is None else np.asarray(T, dtype=float)
    op._require_lagrangian(patch, "Hamiltonian stability")
    certify_soliton(patch, T)
    rng = np.random.default_rng(seed)
    samples = []
    worst = 0.0
    ok = True
    for i in range(k):
        f = op.random_potential(patch.grid, rng)
        smp = evaluate_hamiltonian(patch, T, f, i, s, agree_rel, agree_c)
        gap = smp.agreement()
        allowance = nonneg_rel * smp.scale
        neg = max(0.0, -min(smp.values))
        ratio = max(gap / smp.tolerance if smp.tolerance > 0 else (math.inf if gap else 0.0),
                    neg / allowance if allowance > 0 else (math.inf if neg else 0.0))
        Lf = op.drifted_laplacian(patch, T, f).values
        positive = smp.drifted_square > 0 if np.any(Lf[patch.interior]) else True
        ok &= bool(ratio <= 1.0 and positive)
        worst = max(worst, ratio)
        samples.append({
            "sample": i, "fd": smp.fd, "quadratic_form": smp.quadratic_form,
            "drifted_square": smp.drifted_square, "scale": smp.scale, "step": smp.step,
            "agreement_gap": gap, "agreement_tolerance": smp.tolerance,
            "agree": bool(gap <= smp.tolerance), "nonnegative": bool(neg <= allowance),
            "positive": bool(positive),
        })
    const = evaluate_hamiltonian(patch, T, op.constant_function(patch, 1.0))
    const_max = max(abs(v) for v in const.values)
    ok &= const_max <= zero_tol
    return CheckReport(
        "stability_scan", None, [patch.grid.nodes[0] - 1], patch.backend, worst, None, 1.0,
        bool(ok), wall_clock_seconds=time.perf_counter() - start, seed=seed,
        details={"samples": samples, "constant_sample_max": const_max,
                 "constant_sample_tolerance": zero_tol, "family": STRAIGHT_LINE_NOTE},
    )


def commutation_residual(patch: ImmersedPatch, T, f) -> np.ndarray:
    """``L J grad f - J grad Lf`` at every node."""
    V = op.hamiltonian_field(patch, f)
    LV = op.stability_operator(patch, T, V)
    rhs = op.hamiltonian_field(patch, op.drifted_laplacian(patch, T, f))
    return LV.values - rhs.values


def _inside_support(patch: ImmersedPatch, f, extra: int = 2) -> np.ndarray:
    margin = getattr(f, "support_margin", None)
    if margin is None:
        return patch.interior
    return patch.interior & (patch.grid.layer() >= margin + extra)


def commutation_norms(patch: ImmersedPatch, T, f):
    R = commutation_residual(patch, T, f)
    mask = _inside_support(patch, f)
    R = np.where(mask[..., None], R, 0.0)
    return sup_interior(patch, R), op.weighted_l2(patch, R, T)


def commutation_check(patch: ImmersedPatch, T, f, tol: float = 1e-6) -> CheckReport:
    start = time.perf_counter()
    op._require_lagrangian(patch, "the commutation check")
    T = patch.T if T is None else np.asarray(T, dtype=float)
    sup, l2 = commutation_norms(patch, T, f)
    return CheckReport("commutation", None, [patch.grid.nodes[0] - 1], patch.backend, sup, l2,
                       tol, bool(sup <= tol), wall_clock_seconds=time.perf_counter() - start)


def ibp_residual(patch: ImmersedPatch, T, u, v) -> float:
    """``|int u Lv e + int <grad u, grad v> e| / int |grad u| |grad v| e``."""
    if not getattr(u, "compact", False):
        raise HypothesisViolation(
            "integration by parts needs u with compact support; the boundary term "
            "does not vanish otherwise")
    T = patch.T if T is None else np.asarray(T, dtype=float)
    Lv = op.drifted_laplacian(patch, T, v).values
    gu, gv = op.gradient(patch, u).value, op.gradient(patch, v).value
    lhs = op.weighted_integral(patch, T, u.values * Lv)
    rhs = op.weighted_integral(patch, T, op.inner(gu, gv))
    denom = op.weighted_integral(patch, T, np.sqrt(op.inner(gu, gu) * op.inner(gv, gv)))
    return abs(lhs + rhs) / denom if denom > 0 else abs(lhs + rhs)


def ibp_check(patch: ImmersedPatch, T, u, v, tol: float = 1e-6) -> CheckReport:
    start = time.perf_counter()
    r = ibp_residual(patch, T, u, v)
    return CheckReport("ibp", None, [patch.grid.nodes[0] - 1], patch.backend, r, None, tol,
                       bool(r <= tol), wall_clock_seconds=time.perf_counter() - start)


def constant_field_residuals(patch: ImmersedPatch, T, y) -> dict:
    """Sup and L2 norms of ``L y_perp``, ``L H`` and ``max_A |L x^A - T^A|``."""
    op._require_lagrangian(patch, "the stability identities")
    T = patch.T if T is None else np.asarray(T, dtype=float)
    Ly = op.stability_operator(patch, T, op.constant_normal(patch, y)).values
    LH = op.stability_operator(patch, T, op.mean_curvature_field(patch)).values
    worst = np.zeros(patch.grid.shape)
    for A in range(patch.N):
        LxA = op.drifted_laplacian(patch, T, op.coordinate_function(patch, A)).values
        worst = np.maximum(worst, np.abs(LxA - T[A]))
    return {
        "L_y_perp": (sup_interior(patch, Ly), op.weighted_l2(patch, Ly, T)),
        "L_H": (sup_interior(patch, LH), op.weighted_l2(patch, LH, T)),
        "drifted_coordinates": (sup_interior(patch, worst), op.weighted_l2(patch, worst, T)),
    }


def constant_field_check(patch: ImmersedPatch, T, y, tol: float = 1e-6) -> CheckReport:
    start = time.perf_counter()
    res = constant_field_residuals(patch, T, y)
    sup = max(v[0] for v in res.values())
    l2 = max(v[1] for v in res.values())
    return CheckReport("constant_field", None, [patch.grid.nodes[0] - 1], patch.backend, sup, l2, tol,
                       bool(sup <= tol), wall_clock_seconds=time.perf_counter() - start,
                       details={k: {"sup": v[0], "l2": v[1]} for k, v in res.items()})


def observed_orders(resolutions, residuals) -> list:
    """Richardson orders ``log(r_coarse / r_fine) / log(h_coarse / h_fine)``."""
    out = []
    for (m0, r0), (m1, r1) in zip(zip(resolutions, residuals), zip(resolutions[1:], residuals[1:])):
        if r0 > 0 and r1 > 0:
            out.append(math.log(r0 / r1) / math.log(m1 / m0))
        else:
            out.append(math.nan)
    return out


def validate_ladder(resolutions) -> list:
    res = [int(r) for r in resolutions]
    if len(res) < 3:
        raise SolitonLabError("a convergence study needs at least three resolutions")
    for a, b in zip(res, res[1:]):
        if b != 2 * a:
            raise SolitonLabError(f"resolutions must double at each step; got {res}")
    return res
