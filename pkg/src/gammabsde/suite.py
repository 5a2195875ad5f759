"""Operator-level property checks on solved instances."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dual import Kernel, dual_bound
from .generators import Generator
from .lattice import ScenarioTree
from .optim import SolverConfig
from .primal import leaf_values, minimal_value, minimal_value_curve, value_floor_report, verify_supersolution

__all__ = [
    "PropertyResult",
    "check_monotonicity",
    "check_convexity",
    "check_cash_additivity",
    "check_monotone_convergence",
    "check_supermartingale_floor",
    "check_witness_feasibility",
    "check_weak_duality",
    "check_curve_convexity",
    "run_suite",
]


@dataclass
class PropertyResult:
    name: str
    ok: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.ok else 'FAIL'} {self.name}: {self.detail}"


def _val(tree, gen, xi, z0, cfg):
    return minimal_value(tree, gen, xi, z0, cfg)[0]


def check_monotonicity(tree, gen, xi, z0=0.0, cfg=None, bump=None) -> PropertyResult:
    """``xi1 >= xi2`` leafwise implies ``E(xi1) >= E(xi2) - 2 tol``."""
    cfg = cfg or SolverConfig()
    xi = leaf_values(tree, xi)
    bump = np.where(tree.W_T > 0, 0.5, 0.0) if bump is None else np.asarray(bump, float)
    hi = _val(tree, gen, xi, z0, cfg)
    lo = _val(tree, gen, xi - np.abs(bump), z0, cfg)
    tol = 2 * cfg.tolerance(hi)
    return PropertyResult("monotonicity", hi >= lo - tol, f"E(xi)={hi:.8g} >= E(xi-bump)={lo:.8g} (tol {tol:.2g})")


def check_convexity(tree, gen, xi, z0=0.0, cfg=None, other=None, z_other=None, lams=(0.3, 0.5)) -> PropertyResult:
    """Joint convexity of ``(xi, z) -> E(xi, z)`` along a segment."""
    cfg = cfg or SolverConfig()
    xi = leaf_values(tree, xi)
    other = np.maximum(tree.W_T, 0.0) + 0.25 * tree.W_T**2 if other is None else leaf_values(tree, other)
    z_other = z0 + 0.5 if z_other is None else z_other
    v1 = _val(tree, gen, xi, z0, cfg)
    v2 = _val(tree, gen, other, z_other, cfg)
    worst = np.inf
    for lam in lams:
        vm = _val(tree, gen, lam * xi + (1 - lam) * other, lam * z0 + (1 - lam) * z_other, cfg)
        rhs = lam * v1 + (1 - lam) * v2
        worst = min(worst, rhs + 2 * cfg.tolerance(rhs) - vm)
    return PropertyResult("convexity", worst >= 0, f"min slack {worst:.3g} over lambda={list(lams)}")


def check_cash_additivity(tree, gen, xi, z0=0.0, cfg=None, shifts=(-1.5, 2.0)) -> PropertyResult:
    cfg = cfg or SolverConfig()
    xi = leaf_values(tree, xi)
    base = _val(tree, gen, xi, z0, cfg)
    worst = 0.0
    ok = True
    for m in shifts:
        v = _val(tree, gen, xi + m, z0, cfg)
        err = abs(v - base - m)
        worst = max(worst, err)
        ok &= err <= 2 * cfg.tolerance(v)
    return PropertyResult("cash_additivity", bool(ok), f"max |E(xi+m)-E(xi)-m| = {worst:.3g}")


def check_monotone_convergence(tree, gen, xi, z0=0.0, cfg=None, ns=(1, 2, 4, 8, 16)) -> PropertyResult:
    """``E(xi - 1/n)`` increases in ``n`` and approaches ``E(xi)``."""
    cfg = cfg or SolverConfig()
    xi = leaf_values(tree, xi)
    target = _val(tree, gen, xi, z0, cfg)
    tol = 2 * cfg.tolerance(target)
    vals = [_val(tree, gen, xi - 1.0 / n, z0, cfg) for n in ns]
    incr = all(b >= a - tol for a, b in zip(vals, vals[1:]))
    close = all(abs(target - v) <= tol + 1.0 / n for n, v in zip(ns, vals))
    return PropertyResult("monotone_convergence", incr and close,
                          f"values {[round(v, 6) for v in vals]} -> {target:.6g}")


def check_supermartingale_floor(tree, gen, xi, z0=0.0, cfg=None) -> PropertyResult:
    cfg = cfg or SolverConfig()
    _, sol = minimal_value(tree, gen, xi, z0, cfg)
    tol = cfg.tolerance(sol.value)
    ok, sm, gap = value_floor_report(tree, xi, sol.Y, tol)
    return PropertyResult("supermartingale_floor", ok,
                          f"worst one-step slack {sm.worst_slack:.3g}, min Y - E[xi|F] = {gap:.3g}")


def check_witness_feasibility(tree, gen, xi, z0=0.0, cfg=None) -> PropertyResult:
    cfg = cfg or SolverConfig()
    _, sol = minimal_value(tree, gen, xi, z0, cfg)
    rep = verify_supersolution(tree, gen, xi, sol.Y, sol.ct, cfg.tol_feas)
    return PropertyResult("witness_feasibility", rep.ok, f"worst slack {rep.worst_slack:.3g} at {rep.worst_location}")


def check_weak_duality(tree, gen, xi, z0=0.0, cfg=None, kernels=None, tol_dual=1e-6) -> PropertyResult:
    cfg = cfg or SolverConfig()
    primal = _val(tree, gen, xi, z0, cfg)
    qmax = 0.45 / tree.sqrt_dt
    kernels = kernels or [Kernel(v, tree.T) for v in ([0.0], [0.5 * qmax], [-0.5 * qmax, 0.5 * qmax], [qmax, 0.0])]
    worst = np.inf
    for k in kernels:
        rep = dual_bound(tree, gen, xi, z0, k, primal_value=primal, cfg=SolverConfig(**{**cfg.__dict__, "restarts": 1}))
        worst = min(worst, rep.gap)
    return PropertyResult("weak_duality", worst >= -tol_dual, f"min primal - bound = {worst:.3g} over {len(kernels)} kernels")


def check_curve_convexity(tree, gen, xi, z0=0.0, cfg=None, z_grid=None) -> PropertyResult:
    cfg = cfg or SolverConfig()
    z_grid = np.linspace(z0 - 1.0, z0 + 1.0, 5) if z_grid is None else np.asarray(z_grid)
    curve = minimal_value_curve(tree, gen, xi, z_grid, cfg)
    v = np.array([c[1] for c in curve])
    second = v[:-2] - 2 * v[1:-1] + v[2:]
    tol = 4 * cfg.tolerance(float(np.max(np.abs(v))))
    m = float(np.min(second)) if second.size else 0.0
    return PropertyResult("z_curve_convexity", m >= -tol, f"min second difference {m:.3g}")


def run_suite(tree: ScenarioTree, gen: Generator, xi, z0: float = 0.0, cfg: Optional[SolverConfig] = None,
              include_dual: bool = True) -> list:
    checks = [check_monotonicity, check_convexity, check_cash_additivity, check_monotone_convergence,
              check_supermartingale_floor, check_witness_feasibility, check_curve_convexity]
    if include_dual and gen.y_independent:
        checks.append(check_weak_duality)
    return [c(tree, gen, xi, z0, cfg) for c in checks]
