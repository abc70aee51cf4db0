"""Named verification checks and grid-refinement studies over catalog solitons.

Every check draws its random inputs from ``default_rng((seed, salt))`` with a
fixed per-check salt, so checks are independent of each other and of the
order they run in.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import operators as op
from . import variation as va
from .catalog import FLAT_PLANE, SolitonSpec, flat_plane_with_translation, soliton_residual
from .errors import SolitonLabError
from .jets import Jet, separable
from .patch import ANALYTIC, FINITE_DIFFERENCE, ImmersedPatch, lagrangian_defect, project
from .variation import CheckReport

TOLERANCES = {
    "soliton_residual": 1e-8,
    "lagrangian_defect": 1e-10,
    "f_value_rel": 1e-2,
    "f_value_order": 1.9,
    "ibp": 1e-6,
    "constant_field": 1e-6,
    "commutation": 1e-6,
    "criticality": 1e-6,
    "criticality_s2": 10.0,
    "first_variation_rel": 1e-4,
    "stability_nonneg": 1e-8,
    "stability_agree": 1e-6,
    "stability_agree_c": 10.0,
    "symmetry_c": 1.0,
    "zero": 1e-12,
    "order": 1.8,
}

IBP_MIN_RESOLUTION = 128
N_SEEDED_Y = 5
N_SEEDED_POTENTIALS = 10
N_SEEDED_PAIRS = 5
N_SYMMETRY_PAIRS = 5

SALT = {
    "ibp": 1, "constant_field": 2, "commutation": 3, "criticality": 4,
    "stability_scan": 5, "l_symmetry": 6, "first_variation_control": 7,
}


@dataclass
class SuiteConfig:
    spec: SolitonSpec
    backend: str = ANALYTIC
    seed: int = 42
    step: float = va.FD_STEP
    samples: int = 20
    tolerances: dict = field(default_factory=lambda: dict(TOLERANCES))

    def tol(self, key: str) -> float:
        return self.tolerances.get(key, TOLERANCES[key])

    def rng(self, check: str) -> np.random.Generator:
        return np.random.default_rng((self.seed, SALT[check]))


def _bump(patch: ImmersedPatch, margin: int) -> op.ScalarField:
    return op.cutoff_bump(patch.grid, margin)


def _potentials(patch: ImmersedPatch, rng, count: int, margin: int) -> list:
    return [op.random_potential(patch.grid, rng, margin=margin) for _ in range(count)]


def _reference_potential(patch: ImmersedPatch, margin: int) -> op.ScalarField:
    """Bump times ``sin(u_1) cos(u_2) ... cos(u_n)``."""
    factors = [_trig_derivs(ax, k == 0) for k, ax in enumerate(patch.grid.axes)]
    return op.cutoff_bump(patch.grid, margin) * op.ScalarField(separable(factors, 3))


def _trig_derivs(ax: np.ndarray, use_sin: bool) -> np.ndarray:
    shift = -0.5 * math.pi if use_sin else 0.0
    return np.stack([np.cos(ax + shift + 0.5 * math.pi * d) for d in range(4)])


def _unit_vectors(rng, count: int, N: int) -> list:
    out = []
    for _ in range(count):
        y = rng.normal(size=N)
        out.append(y / np.linalg.norm(y))
    return out


# --- residual measurements shared by single-grid checks and refinement studies ---
# each returns {component: pointwise magnitude field} or {component: scalar}

def measure_soliton_residual(patch, cfg, margin):
    _, Tperp = project(patch, patch.T)
    R = patch.mean_curvature_jet.value - Tperp
    return {"H_minus_T_perp": np.linalg.norm(R, axis=-1)}


def measure_constant_field(patch, cfg, margin):
    T = patch.T
    worst_y = np.zeros(patch.grid.shape)
    for y in _unit_vectors(cfg.rng("constant_field"), N_SEEDED_Y, patch.N):
        Ly = op.stability_operator(patch, T, op.constant_normal(patch, y)).values
        worst_y = np.fmax(worst_y, np.linalg.norm(Ly, axis=-1))
    LH = op.stability_operator(patch, T, op.mean_curvature_field(patch)).values
    worst_x = np.zeros(patch.grid.shape)
    for A in range(patch.N):
        LxA = op.drifted_laplacian(patch, T, op.coordinate_function(patch, A)).values
        worst_x = np.fmax(worst_x, np.abs(LxA - T[A]))
    return {
        "L_y_perp": worst_y,
        "L_H": np.linalg.norm(LH, axis=-1),
        "drifted_coordinates": worst_x,
    }


def measure_commutation(patch, cfg, margin):
    rng = cfg.rng("commutation")
    fs = [_reference_potential(patch, margin)] + _potentials(patch, rng, N_SEEDED_POTENTIALS, margin)
    worst = np.zeros(patch.grid.shape)
    inside = patch.grid.layer() >= margin + 2
    for f in fs:
        R = va.commutation_residual(patch, patch.T, f)
        worst = np.fmax(worst, np.where(inside, np.linalg.norm(R, axis=-1), 0.0))
    return {"commutation": worst}


def measure_ibp(patch, cfg, margin):
    b = _bump(patch, margin)
    rng = cfg.rng("ibp")
    pairs = [(b, b)]
    for _ in range(N_SEEDED_PAIRS):
        u = op.random_potential(patch.grid, rng, margin=margin)
        coeffs = rng.uniform(-1.0, 1.0, size=(7,) * patch.n)
        pairs.append((u, op.ScalarField(op.trig_polynomial(patch.grid, coeffs))))
    return {"ibp_relative": max(va.ibp_residual(patch, patch.T, u, v) for u, v in pairs)}


def _criticality_fields(patch, cfg, margin):
    rng = cfg.rng("criticality")
    out = []
    for f in _potentials(patch, rng, N_SEEDED_POTENTIALS, margin):
        V = op.hamiltonian_field(patch, f)
        # unit sup-norm so the step s is an absolute displacement
        out.append(op.NormalField(V.jet * (1.0 / np.nanmax(np.abs(V.values))), V.support_margin))
    return out


def measure_criticality(patch, cfg, margin):
    vals = [abs(va.first_variation_formula(patch, patch.T, V))
            for V in _criticality_fields(patch, cfg, margin)]
    return {"first_variation_formula": max(vals)}


def measure_f_value(patch, cfg, margin):
    exact = exact_f_value(cfg.spec)
    return {"f_value_error": abs(va.f_value(patch, patch.T) - exact)}


def measure_geometry(patch, cfg, margin):
    """Finite-difference tensors against the analytic ones on the same grid."""
    spec = cfg.spec.with_resolution(patch.grid.nodes[0] - 1)
    other = spec.build(ANALYTIC if patch.backend == FINITE_DIFFERENCE else FINITE_DIFFERENCE)
    out = {}
    for name, get in [("metric", lambda p: p.metric_jet.value),
                      ("christoffel", lambda p: p.christoffel_jet.value),
                      ("second_fundamental_form", lambda p: p.sff_jet.value),
                      ("mean_curvature", lambda p: p.mean_curvature_jet.value)]:
        d = get(patch) - get(other)
        out[name] = np.sqrt(np.sum(d.reshape(patch.grid.shape + (-1,)) ** 2, axis=-1))
    return out


MEASURES: dict[str, Callable] = {
    "soliton_residual": measure_soliton_residual,
    "constant_field": measure_constant_field,
    "commutation": measure_commutation,
    "ibp": measure_ibp,
    "criticality": measure_criticality,
    "f_value": measure_f_value,
    "geometry": measure_geometry,
}

FLOOR_KEY = {
    "soliton_residual": "soliton_residual", "constant_field": "constant_field", "commutation": "commutation",
    "ibp": "ibp", "criticality": "criticality", "f_value": "f_value_rel", "geometry": "constant_field",
}


def exact_f_value(spec: SolitonSpec) -> float:
    """Closed form of the window integral of ``e^<T,x> dmu`` for catalog solitons.

    Grim reaper factors contribute ``int sec^2(c u) du = tan(c u)/c``; flat
    factors contribute ``int e^{t u} du`` with ``t`` the tangential speed.
    """
    T = spec.T
    total = 1.0
    for k, (c, (a, b)) in enumerate(zip(spec.factor_speeds, spec.window)):
        if c is not None:
            total *= (math.tan(c * b) - math.tan(c * a)) / c
        else:
            t = T[2 * k]
            total *= (b - a) if t == 0 else (math.exp(t * b) - math.exp(t * a)) / t
    return total


# --- refinement studies -------------------------------------------------------

def observed_orders(resolutions, residuals) -> list:
    return va.observed_orders(resolutions, residuals)


def convergence_study(check: str, spec: SolitonSpec, resolutions, backend: str = FINITE_DIFFERENCE,
                      cfg: Optional[SuiteConfig] = None, base_margin: int = op.DEFAULT_BUMP_MARGIN
                      ) -> CheckReport:
    """Residuals on a doubling ladder, compared at physically fixed points.

    Pointwise residuals are sampled on the coarsest grid's nodes (shared by
    every level); integral residuals use the same cutoff functions at every
    level because cutoff margins scale with the refinement factor.
    """
    if check not in MEASURES:
        raise SolitonLabError(f"unknown check {check!r}; available: {', '.join(MEASURES)}")
    start = time.perf_counter()
    res = va.validate_ladder(resolutions)
    cfg = cfg or SuiteConfig(spec, backend)
    coarse = res[0]
    table = {}
    for r in res:
        factor = r // coarse
        patch = spec.with_resolution(r).build(backend)
        data = MEASURES[check](patch, replace(cfg, spec=spec.with_resolution(r)), base_margin * factor)
        stride = tuple(slice(None, None, factor) for _ in range(patch.n))
        for comp, val in data.items():
            if np.ndim(val) == 0:
                sup = l2 = float(val)
            else:
                field_ = np.asarray(val)
                shared = field_[stride]
                interior = _coarse_interior(patch, coarse, factor)[stride]
                vals = shared[interior]
                vals = vals[np.isfinite(vals)]
                sup = float(vals.max()) if vals.size else 0.0
                box = _coarse_interior(patch, coarse, factor)
                l2 = op.weighted_l2(patch, np.where(box, field_, np.nan), patch.T)
            table.setdefault(comp, []).append((r, sup, l2))

    floor = cfg.tol(FLOOR_KEY[check])
    if check == "f_value":
        floor = floor * abs(exact_f_value(spec))
    min_order = cfg.tol("f_value_order") if check == "f_value" and backend == ANALYTIC else cfg.tol("order")
    rows, passed, worst_order = [], True, math.inf
    worst_sup = 0.0
    for comp, entries in table.items():
        sups = [e[1] for e in entries]
        orders = observed_orders(res, sups)
        at_floor = all(s <= floor for s in sups)
        if backend == ANALYTIC:
            ok = at_floor
        else:
            ok = at_floor or all(o >= min_order for o in orders)
        passed &= ok
        finite = [o for o in orders if not math.isnan(o)]
        if finite and not at_floor:
            worst_order = min(worst_order, min(finite))
        worst_sup = max(worst_sup, sups[-1])
        for i, (r, sup, l2) in enumerate(entries):
            rows.append({"component": comp, "resolution": r, "sup_residual": sup,
                         "l2_residual": l2, "order": orders[i - 1] if i > 0 else None})
    order_value = None if worst_order == math.inf else worst_order
    tolerance = floor if backend == ANALYTIC else min_order
    return CheckReport(
        f"converge:{check}", spec.to_dict(), res, backend, worst_sup,
        max(r["l2_residual"] for r in rows if r["resolution"] == res[-1]), tolerance,
        bool(passed), order=order_value, wall_clock_seconds=time.perf_counter() - start,
        seed=cfg.seed, details={"table": rows, "floor": floor, "min_order": min_order,
                                "sampling": "coarsest-grid interior nodes"},
    )


def _coarse_interior(patch: ImmersedPatch, coarse: int, factor: int) -> np.ndarray:
    # coarse interior: at least margin+1 coarse layers in, which keeps fourth-jet data finite
    layers = (patch.grid.margin + 1) if patch.backend == FINITE_DIFFERENCE else 0
    return patch.grid.layer() >= layers * factor


# --- single-grid checks ----------------------------------------------------------

def _report(name, cfg, patch, sup, l2, tol, passed, start, details=None, seed=None, res=None):
    return CheckReport(name, cfg.spec.to_dict(), [res or patch.grid.nodes[0] - 1], patch.backend,
                       float(sup), None if l2 is None else float(l2), float(tol), bool(passed),
                       None, time.perf_counter() - start, seed, details or {})


def _ladder(cfg: SuiteConfig) -> list:
    r = cfg.spec.resolution
    if r % 4 or r < 16:
        raise SolitonLabError("finite-difference checks refine over (res/4, res/2, res); "
                              "res must be a multiple of 4 and at least 16")
    return [r // 4, r // 2, r]


def _fd_or(check: str, cfg: SuiteConfig, analytic: Callable) -> CheckReport:
    if cfg.backend == FINITE_DIFFERENCE:
        rep = convergence_study(check, cfg.spec, _ladder(cfg), FINITE_DIFFERENCE, cfg)
        rep.check = check
        return rep
    return analytic()


def check_soliton_residual(cfg: SuiteConfig) -> CheckReport:
    def run():
        start = time.perf_counter()
        patch = cfg.spec.build(cfg.backend)
        sup, l2 = soliton_residual(patch)
        tol = cfg.tol("soliton_residual")
        return _report("soliton_residual", cfg, patch, sup, l2, tol, sup <= tol, start)
    return _fd_or("soliton_residual", cfg, run)


def check_lagrangian_defect(cfg: SuiteConfig) -> CheckReport:
    start = time.perf_counter()
    patch = cfg.spec.build(cfg.backend)
    defect = lagrangian_defect(patch)[patch.interior]
    sup = float(np.nanmax(defect))
    tol = cfg.tol("lagrangian_defect")
    return _report("lagrangian_defect", cfg, patch, sup, None, tol, sup <= tol, start)


def check_f_value(cfg: SuiteConfig) -> CheckReport:
    """Trapezoid F against its closed form at ``res`` and ``2 res``."""
    start = time.perf_counter()
    exact = exact_f_value(cfg.spec)
    r = cfg.spec.resolution
    errs, values = [], []
    for res in (r, 2 * r):
        values.append(va.f_value(cfg.spec.with_resolution(res).build(cfg.backend)))
        errs.append(abs(values[-1] - exact))
    order = observed_orders([r, 2 * r], errs)[0]
    rel = errs[0] / abs(exact)
    tol = cfg.tol("f_value_rel")
    # exact agreement (flat directions) leaves no order to measure
    min_order = cfg.tol("f_value_order") if cfg.backend == ANALYTIC else cfg.tol("order")
    order_ok = math.isnan(order) or order >= min_order or errs[0] <= 1e-14 * abs(exact)
    rep = CheckReport("f_value", cfg.spec.to_dict(), [r, 2 * r], cfg.backend, rel, None, tol,
                      bool(rel <= tol and order_ok), None if math.isnan(order) else order,
                      time.perf_counter() - start, None,
                      {"exact": exact, "values": values, "abs_errors": errs,
                       "min_order": min_order})
    return rep


def check_ibp(cfg: SuiteConfig) -> CheckReport:
    def run():
        start = time.perf_counter()
        res = max(cfg.spec.resolution, IBP_MIN_RESOLUTION)
        patch = cfg.spec.with_resolution(res).build(cfg.backend)
        r = measure_ibp(patch, cfg, op.DEFAULT_BUMP_MARGIN)["ibp_relative"]
        tol = cfg.tol("ibp")
        return _report("ibp", cfg, patch, r, None, tol, r <= tol, start, seed=cfg.seed, res=res,
                       details={"pairs": 1 + N_SEEDED_PAIRS, "resolution_used": res})
    return _fd_or("ibp", cfg, run)


def check_constant_field(cfg: SuiteConfig) -> CheckReport:
    def run():
        start = time.perf_counter()
        patch = cfg.spec.build(cfg.backend)
        data = measure_constant_field(patch, cfg, op.DEFAULT_BUMP_MARGIN)
        comps = {k: {"sup": float(np.nanmax(v[patch.interior])),
                     "l2": op.weighted_l2(patch, v, patch.T)} for k, v in data.items()}
        sup = max(c["sup"] for c in comps.values())
        l2 = max(c["l2"] for c in comps.values())
        tol = cfg.tol("constant_field")
        return _report("constant_field", cfg, patch, sup, l2, tol, sup <= tol, start, comps, cfg.seed)
    return _fd_or("constant_field", cfg, run)


def check_commutation(cfg: SuiteConfig) -> CheckReport:
    def run():
        start = time.perf_counter()
        patch = cfg.spec.build(cfg.backend)
        field_ = measure_commutation(patch, cfg, op.DEFAULT_BUMP_MARGIN)["commutation"]
        sup = float(np.nanmax(field_[patch.interior]))
        l2 = op.weighted_l2(patch, field_, patch.T)
        tol = cfg.tol("commutation")
        return _report("commutation", cfg, patch, sup, l2, tol, sup <= tol, start,
                       {"potentials": 1 + N_SEEDED_POTENTIALS}, cfg.seed)
    return _fd_or("commutation", cfg, run)


def check_criticality(cfg: SuiteConfig) -> CheckReport:
    """First variation vanishes on the soliton, both as a formula and as a difference quotient."""
    if cfg.backend == FINITE_DIFFERENCE:
        return _fd_or("criticality", cfg, None)
    start = time.perf_counter()
    patch = cfg.spec.build(cfg.backend)
    tol = cfg.tol("criticality")
    s = cfg.step
    fd_tol = tol + cfg.tol("criticality_s2") * s**2
    rows, ok, worst = [], True, 0.0
    for i, V in enumerate(_criticality_fields(patch, cfg, op.DEFAULT_BUMP_MARGIN)):
        formula = va.first_variation_formula(patch, patch.T, V)
        fd = va.first_variation_fd(patch, patch.T, V, s)
        ok &= abs(formula) <= tol and abs(fd) <= fd_tol
        worst = max(worst, abs(formula) / tol, abs(fd) / fd_tol)
        rows.append({"sample": i, "formula": formula, "fd": fd})
    return _report("criticality", cfg, patch, worst, None, 1.0, ok, start,
                   {"samples": rows, "step": s, "formula_tolerance": tol, "fd_tolerance": fd_tol},
                   cfg.seed)


def check_first_variation_control(cfg: SuiteConfig) -> CheckReport:
    """Non-soliton control: flat plane with normal T, where F' is strictly positive."""
    start = time.perf_counter()
    n = cfg.spec.n
    T = np.zeros(2 * n)
    T[1] = 1.0
    window = [(0.0, 1.0)] * n
    patch = flat_plane_with_translation(n, T, window, cfg.spec.resolution, cfg.backend)
    b = op.cutoff_bump(patch.grid)
    V = op.NormalField(Jet([np.expand_dims(p, n) * T.reshape((-1,) + (1,) * d)
                           for d, p in enumerate(b.jet.parts)], n), b.support_margin)
    formula = va.first_variation_formula(patch, T, V)
    fd = va.first_variation_fd(patch, T, V, cfg.step)
    rel = abs(fd - formula) / abs(formula)
    tol = cfg.tol("first_variation_rel")
    ok = rel <= tol and formula > 0 and fd > 0
    spec = {"name": FLAT_PLANE, "n": n, "window": [list(w) for w in window],
            "resolution": cfg.spec.resolution, "translation": T.tolist()}
    rep = CheckReport("first_variation_control", spec, [cfg.spec.resolution], cfg.backend, rel,
                      None, tol, bool(ok), None, time.perf_counter() - start, None,
                      {"formula": formula, "fd": fd, "step": cfg.step})
    return rep


def check_stability_scan(cfg: SuiteConfig) -> CheckReport:
    patch = cfg.spec.build(cfg.backend)
    rep = va.hamiltonian_stability_scan(
        patch, patch.T, cfg.samples, cfg.seed, None,
        nonneg_rel=cfg.tol("stability_nonneg"), agree_rel=cfg.tol("stability_agree"),
        agree_c=cfg.tol("stability_agree_c"), zero_tol=cfg.tol("zero"))
    rep.soliton = cfg.spec.to_dict()
    return rep


def check_l_symmetry(cfg: SuiteConfig) -> CheckReport:
    """Weighted symmetry of L on compactly supported Hamiltonian pairs."""
    start = time.perf_counter()
    patch = cfg.spec.build(cfg.backend)
    T = patch.T
    rng = cfg.rng("l_symmetry")
    h = va.max_spacing(patch)
    rows, worst, ok = [], 0.0, True
    for i in range(N_SYMMETRY_PAIRS):
        V = op.hamiltonian_field(patch, op.random_potential(patch.grid, rng))
        W = op.hamiltonian_field(patch, op.random_potential(patch.grid, rng))
        VLW = op.inner(V, op.stability_operator(patch, T, W))
        WLV = op.inner(W, op.stability_operator(patch, T, V))
        a = op.weighted_integral(patch, T, VLW)
        b = op.weighted_integral(patch, T, WLV)
        # both integrands can cancel, so measure against their absolute size
        size = max(op.weighted_integral(patch, T, np.abs(VLW)), op.weighted_integral(patch, T, np.abs(WLV)))
        tol = max(cfg.tol("stability_agree"), cfg.tol("symmetry_c") * h**2) * size
        ok &= abs(a - b) <= tol
        worst = max(worst, abs(a - b) / tol)
        rows.append({"pair": i, "V_LW": a, "W_LV": b, "tolerance": tol})
    return _report("l_symmetry", cfg, patch, worst, None, 1.0, ok, start, {"pairs": rows}, cfg.seed)


CHECKS: dict[str, Callable[[SuiteConfig], CheckReport]] = {
    "soliton_residual": check_soliton_residual,
    "lagrangian_defect": check_lagrangian_defect,
    "f_value": check_f_value,
    "ibp": check_ibp,
    "constant_field": check_constant_field,
    "commutation": check_commutation,
    "criticality": check_criticality,
    "first_variation_control": check_first_variation_control,
    "stability_scan": check_stability_scan,
    "l_symmetry": check_l_symmetry,
}


def run_check(name: str, cfg: SuiteConfig) -> CheckReport:
    if name not in CHECKS:
        raise SolitonLabError(f"unknown check {name!r}; available: {', '.join(CHECKS)}")
    return CHECKS[name](cfg)
