"""Minimal supersolutions on a scenario tree.

For fixed controls the smallest value process satisfying the supersolution
inequalities is obtained by making them bind from the leaves backwards:

    Y(leaf) = xi(leaf)
    Y(node) = g(Z, Delta, Gamma)*dt + max_child [Y(child) - Z(node)*dW(edge)]

``Y(root)`` is convex in ``(Delta, Gamma)`` (affine ``Z``, convex ``g``, max of
convex maps), so the minimal value is a finite-dimensional convex program in
the node controls.  The same recursion with the max replaced by a fixed pair
of edge weights gives ``E_Q[sum g dt - int Z dW] + E_Q[xi]``, which the dual
module uses for the conjugate.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .controls import ControlTriple, propagate, synthesize
from .generators import Generator, project_domain
from .lattice import ScenarioTree, conditional_expectation, is_supermartingale
from .optim import OptResult, SolverConfig, projected_subgradient, smoothed_lbfgs

__all__ = [
    "UnsupportedModeError",
    "Supersolution",
    "SolveReport",
    "VerificationReport",
    "DecompositionReport",
    "verify_supersolution",
    "evaluate_Y_given_controls",
    "minimal_value",
    "decompose",
    "minimal_value_curve",
    "leaf_values",
]


class UnsupportedModeError(NotImplementedError):
    """The backward elimination needs a generator that does not depend on ``y``."""


def leaf_values(tree: ScenarioTree, xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 0:
        xi = np.full(tree.n_leaves, float(xi))
    if xi.shape != (tree.n_leaves,):
        raise ValueError(f"terminal condition needs {tree.n_leaves} leaf values, got shape {xi.shape}")
    if not np.all(np.isfinite(xi)):
        raise ValueError("terminal condition must be finite at every leaf")
    return xi


# ----------------------------------------------------------------------------
# backward recursion and its adjoint


def _backward(tree, gen, xi, Z, delta, gamma, tau=0.0, weights=None, want_grad=False):
    """Run the recursion; returns ``(Y, w_up, w_down, g_values, grad)``.

    ``weights=(p_up, p_down)`` fixes the edge weights, ``tau > 0`` uses the
    log-sum-exp surrogate ``tau*log(exp(a/tau) + exp(b/tau))`` of the max, and
    otherwise the exact max is taken with ties sent to the up child.
    """
    dt, s = tree.dt, tree.sqrt_dt
    n_int = tree.n_internal
    Y = np.empty(tree.n_nodes)
    Y[tree.leaves] = xi
    w_up = np.empty(n_int)
    w_dn = np.empty(n_int)
    gvals = np.empty(n_int)
    times = tree.grid.times
    for k in range(tree.N - 1, -1, -1):
        sl, ch = tree.level(k), tree.level(k + 1)
        z = Z[sl]
        gk = gen.eval(times[k], 0.0, z, delta[sl], gamma[sl])
        a_up = Y[ch][0::2] - z * s
        a_dn = Y[ch][1::2] + z * s
        if weights is not None:
            wu, wd = weights[0][sl], weights[1][sl]
            m = wu * a_up + wd * a_dn
        elif tau > 0:
            m = np.logaddexp(a_up / tau, a_dn / tau) * tau
            with np.errstate(invalid="ignore", over="ignore"):
                wu = np.exp((a_up - m) / tau)
            wu = np.where(np.isfinite(wu), wu, 1.0)
            wd = 1.0 - wu
        else:
            up = a_up >= a_dn
            m = np.where(up, a_up, a_dn)
            wu = up.astype(float)
            wd = 1.0 - wu
        gvals[sl] = gk
        Y[sl] = gk * dt + m
        w_up[sl] = wu
        w_dn[sl] = wd
    grad = None
    if want_grad:
        grad = _adjoint(tree, gen, Z, delta, gamma, w_up, w_dn)
    return Y, w_up, w_dn, gvals, grad


def _adjoint(tree, gen, Z, delta, gamma, w_up, w_dn):
    """Gradient of ``Y(root)`` in ``(Delta, Gamma)`` for fixed edge weights."""
    dt, s = tree.dt, tree.sqrt_dt
    n_int = tree.n_internal
    mu = np.empty(n_int)
    mu[0] = 1.0
    for k in range(tree.N - 1):
        sl, ch = tree.level(k), tree.level(k + 1)
        nxt = np.empty(2 ** (k + 1))
        nxt[0::2] = mu[sl] * w_up[sl]
        nxt[1::2] = mu[sl] * w_dn[sl]
        mu[ch] = nxt
    gD = np.empty(n_int)
    gG = np.empty(n_int)
    lam = np.zeros(tree.n_leaves)
    times = tree.grid.times
    for k in range(tree.N - 1, -1, -1):
        sl = tree.level(k)
        gz, gd, gg = gen.gradient(times[k], 0.0, Z[sl], delta[sl], gamma[sl])
        lu, ld = lam[0::2], lam[1::2]
        gD[sl] = mu[sl] * gd * dt + (lu + ld) * dt
        gG[sl] = mu[sl] * gg * dt + s * (lu - ld)
        lam = mu[sl] * (gz * dt - s * (w_up[sl] - w_dn[sl])) + lu + ld
    return np.concatenate([gD, gG])


def _bounds(tree: ScenarioTree, gen: Generator):
    dom = gen.domain
    n = tree.n_internal
    if dom is None:
        return None
    dl = -np.inf if dom.delta_lo is None else dom.delta_lo
    dh = np.inf if dom.delta_hi is None else dom.delta_hi
    M = np.inf if dom.gamma_radius is None else dom.gamma_radius
    lo = np.concatenate([np.full(n, dl), np.full(n, -M)])
    hi = np.concatenate([np.full(n, dh), np.full(n, M)])
    return list(zip(np.where(np.isinf(lo), None, lo), np.where(np.isinf(hi), None, hi)))


def _projector(tree: ScenarioTree, gen: Generator, z0: float):
    """Map controls into the generator's domain.

    Box/ball constraints on ``(Delta, Gamma)`` are a Euclidean projection.
    A box on ``z`` is enforced by a level-by-level repair: given ``Z(node)``
    inside the box, both child values ``Z + Delta dt +- Gamma sqrt(dt)`` are
    clamped into it, which is feasible and idempotent but not Euclidean.
    """
    n = tree.n_internal
    dom = gen.domain
    if dom is None:
        return lambda x: x
    dt, s = tree.dt, tree.sqrt_dt

    def project(x):
        d, g = x[:n], x[n:]
        _, d, g = project_domain(gen, 0.0, d, g)
        if dom.constrains_z:
            lo = -np.inf if dom.z_lo is None else dom.z_lo
            hi = np.inf if dom.z_hi is None else dom.z_hi
            d = d.copy()
            g = g.copy()
            Z = np.empty(tree.n_nodes)
            Z[0] = np.clip(z0, lo, hi)
            for k in range(tree.N):
                sl, ch = tree.level(k), tree.level(k + 1)
                z = Z[sl]
                a = np.clip(d[sl] * dt + g[sl] * s, lo - z, hi - z)
                b = np.clip(d[sl] * dt - g[sl] * s, lo - z, hi - z)
                d[sl] = (a + b) / (2 * dt)
                g[sl] = (a - b) / (2 * s)
                nz = np.empty(2 ** (k + 1))
                nz[0::2] = z + a
                nz[1::2] = z + b
                Z[ch] = nz
        return np.concatenate([d, g])

    return project


def _split(tree, x):
    n = tree.n_internal
    return x[:n], x[n:]


# ----------------------------------------------------------------------------
# public operations


@dataclass
class VerificationReport:
    ok: bool
    worst_slack: float
    worst_location: str
    infeasible: bool = False
    note: str = ""

    def __bool__(self):
        return self.ok


def verify_supersolution(tree: ScenarioTree, gen: Generator, xi, Y, ct: ControlTriple, tol: float = 1e-9) -> VerificationReport:
    """Check the supersolution inequalities edge by edge and at the leaves.

    One-step inequalities ``Y(node) - g*dt + Z*dW >= Y(child)`` telescope to
    every pair ``s <= t`` along a path.  ``y``-dependent generators are
    evaluated at ``Y(node)``.
    """
    xi = leaf_values(tree, xi)
    Y = np.asarray(Y, dtype=float)
    dt = tree.dt
    times = tree.grid.times
    worst, where = np.inf, ""
    for k in range(tree.N):
        sl, ch = tree.level(k), tree.level(k + 1)
        g = gen.eval(times[k], Y[sl], ct.Z[sl], ct.delta[sl], ct.gamma[sl])
        if not np.all(np.isfinite(g)):
            i = sl.start + int(np.argmax(~np.isfinite(g)))
            return VerificationReport(False, -np.inf, f"node {i}", True, "generator is +inf at a visited node")
        lhs = np.repeat(Y[sl] - g * dt, 2) + np.repeat(ct.Z[sl], 2) * tree.dW[ch]
        slack = lhs - Y[ch]
        i = int(np.argmin(slack))
        if slack[i] < worst:
            worst, where = float(slack[i]), f"edge into node {ch.start + i}"
    slack = Y[tree.leaves] - xi
    i = int(np.argmin(slack))
    if slack[i] < worst:
        worst, where = float(slack[i]), f"leaf {tree.leaves.start + i}"
    return VerificationReport(bool(worst >= -tol), worst, where)


def evaluate_Y_given_controls(tree: ScenarioTree, gen: Generator, xi, ct: ControlTriple):
    """Smallest value process compatible with the fixed control; returns ``(Y, Y_root)``."""
    if not gen.y_independent:
        raise UnsupportedModeError(
            "backward elimination requires a y-independent generator; "
            "y-dependent generators are only supported by verify_supersolution"
        )
    xi = leaf_values(tree, xi)
    Y = _backward(tree, gen, xi, ct.Z, ct.delta, ct.gamma)[0]
    return Y, float(Y[0])


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    restart_values: list
    tolerance: float
    method: str
    note: str = ""


@dataclass
class DecompositionReport:
    predictable: bool
    increasing: bool
    max_disagreement: float
    min_increment: float

    @property
    def ok(self):
        return self.predictable and self.increasing


@dataclass
class Supersolution:
    """Value process, control triple and extracted increasing process ``A``."""

    Y: np.ndarray = field(repr=False)
    ct: ControlTriple = field(repr=False)
    A: np.ndarray = field(repr=False)
    value: float = float("nan")
    report: Optional[SolveReport] = None
    decomposition: Optional[DecompositionReport] = None


def _solve_once(tree, gen, xi, z0, x0, cfg: SolverConfig) -> OptResult:
    n = tree.n_internal
    project = _projector(tree, gen, z0)

    def exact(x):
        d, g = _split(tree, x)
        Z, _ = propagate(tree, z0, d, g)
        Y, wu, wd, gv, grad = _backward(tree, gen, xi, Z, d, g, want_grad=True)
        return Y[0], grad

    x = project(np.asarray(x0, float))
    iters = 0
    converged = True
    if cfg.method == "smoothed" and not (gen.domain is not None and gen.domain.constrains_z):
        scale = max(1.0, float(np.max(np.abs(xi))))

        def smooth(x, tau):
            d, g = _split(tree, x)
            Z, _ = propagate(tree, z0, d, g)
            Y, wu, wd, gv, grad = _backward(tree, gen, xi, Z, d, g, tau=tau * scale, want_grad=True)
            return Y[0], grad

        res = smoothed_lbfgs(smooth, x, cfg.temperatures, bounds=_bounds(tree, gen), maxiter=cfg.max_iters)
        x = project(res.x)
        iters += res.iterations
        converged = res.converged
        step0 = 1e-3 * scale
        polish = projected_subgradient(exact, x, project, step0=step0, max_iters=cfg.polish_iters, decay=cfg.decay)
    else:
        polish = projected_subgradient(exact, x, project, step0=cfg.step0, max_iters=cfg.max_iters, decay=cfg.decay)
        converged = polish.converged
    iters += polish.iterations
    return OptResult(polish.x, polish.fun, iters, converged)


def minimal_value(tree: ScenarioTree, gen: Generator, xi, z0: float = 0.0, cfg: Optional[SolverConfig] = None):
    """Minimal supersolution value and a witness supersolution.

    Restarts from the zero control and from seeded random controls; the
    spread of the restart values against ``cfg.tolerance`` is reported as
    the convergence certificate.

    Returns
    -------
    value : float
    sol : Supersolution
    """
    cfg = cfg or SolverConfig()
    if not gen.y_independent:
        raise UnsupportedModeError("minimal_value needs a y-independent generator")
    if not (gen.pos and gen.con):
        raise ValueError("minimal_value requires a generator declaring (POS) and (CON)")
    xi = leaf_values(tree, xi)
    n = tree.n_internal
    starts = [np.zeros(2 * n)]
    for r in range(1, cfg.restarts):
        rng = np.random.default_rng([cfg.seed, r])
        starts.append(0.5 * rng.standard_normal(2 * n))

    if cfg.threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(cfg.threads) as ex:
            results = list(ex.map(lambda x0: _solve_once(tree, gen, xi, z0, x0, cfg), starts))
    else:
        results = [_solve_once(tree, gen, xi, z0, x0, cfg) for x0 in starts]

    vals = [r.fun for r in results]
    best = int(np.argmin(vals))  # lowest restart index wins ties
    d, g = _split(tree, results[best].x)
    ct = synthesize(tree, z0, d, g)
    Y, value = evaluate_Y_given_controls(tree, gen, xi, ct)
    tol = cfg.tolerance(value)
    finite = [v for v in vals if np.isfinite(v)]
    spread = max(finite) - min(finite) if finite else np.inf
    converged = bool(np.isfinite(value) and spread <= tol and all(r.converged for r in results))
    note = "" if converged else f"restart spread {spread:.3g} vs tolerance {tol:.3g}"
    if not np.isfinite(value):
        note = "no finite control found; generator domain excludes every tried control"
    report = SolveReport(converged, sum(r.iterations for r in results), vals, tol, cfg.method, note)
    A, drep = decompose(tree, Y, ct, gen)
    return value, Supersolution(Y, ct, A, value, report, drep)


def decompose(tree: ScenarioTree, Y, ct: ControlTriple, gen: Optional[Generator] = None, tol: float = 1e-9):
    """Extract ``A`` in ``Y = Y(root) + int Z dW - int g dt - A``.

    Per edge the increment is ``Y(node) + Z*dW - Y(child) - g*dt``.  ``A`` is
    predictable when both child edges of a node carry the same increment and
    increasing when no increment is negative; both are reported, not enforced.
    """
    Y = np.asarray(Y, dtype=float)
    A = np.zeros(tree.n_nodes)
    times = tree.grid.times
    max_dis = 0.0
    min_inc = np.inf
    for k in range(tree.N):
        sl, ch = tree.level(k), tree.level(k + 1)
        g = np.zeros(2**k) if gen is None else gen.eval(times[k], Y[sl], ct.Z[sl], ct.delta[sl], ct.gamma[sl])
        a = np.repeat(Y[sl] - g * tree.dt, 2) + np.repeat(ct.Z[sl], 2) * tree.dW[ch] - Y[ch]
        A[ch] = np.repeat(A[sl], 2) + a
        if a.size:
            max_dis = max(max_dis, float(np.max(np.abs(a[0::2] - a[1::2]))))
            min_inc = min(min_inc, float(np.min(a)))
    if not np.isfinite(min_inc):
        min_inc = 0.0
    scale = max(1.0, float(np.max(np.abs(Y))))
    return A, DecompositionReport(max_dis <= tol * scale, min_inc >= -tol * scale, max_dis, min_inc)


def minimal_value_curve(tree: ScenarioTree, gen: Generator, xi, z_grid, cfg: Optional[SolverConfig] = None):
    """``[(z, minimal_value(z)) for z in z_grid]``."""
    return [(float(z), minimal_value(tree, gen, xi, float(z), cfg)[0]) for z in np.atleast_1d(z_grid)]


def value_floor_report(tree: ScenarioTree, xi, Y, tol: float = 1e-9):
    """Supermartingale test of ``Y`` and the floor ``Y >= E[xi | node]``."""
    xi = leaf_values(tree, xi)
    sm = is_supermartingale(tree, Y, tol=tol)
    floor = np.empty(tree.n_nodes)
    floor[tree.leaves] = xi
    for k in range(tree.N - 1, -1, -1):
        floor[tree.level(k)] = conditional_expectation(tree, floor[tree.level(k + 1)])
    gap = float(np.min(np.asarray(Y) - floor))
    return sm.ok and gap >= -tol, sm, gap
