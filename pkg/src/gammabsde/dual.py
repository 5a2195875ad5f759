"""Conjugate values, dual lower bounds and reconstruction from the dual.

For a reweighted tree measure ``Q`` the conjugate of the minimal value map is

    E*(Q) = -inf_{Delta, Gamma} E_Q[ sum g*dt - int Z dW ]

which :func:`inner_value_numeric` computes on the tree.  For the quadratic
generator and a deterministic kernel the continuous-time optimizer is

    Delta(t) = R(t)/2,   Gamma(t) = q(t) R(t)/2,   R(t) = int_t^T q(s) ds,

so that ``E*(Q) = 1/4 int R^2 (1 + q^2) dt + z int q dt``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import minimize_scalar

from .controls import ControlTriple, propagate, synthesize
from .generators import Generator
from .lattice import GirsanovMeasure, ScenarioTree, expectation, girsanov_reweight
from .optim import SolverConfig, lbfgs, projected_subgradient
from .primal import Supersolution, _backward, _bounds, _projector, _split, decompose, leaf_values

__all__ = [
    "Kernel",
    "InnerResult",
    "ELOptimizer",
    "DualReport",
    "ReconstructionReport",
    "inner_value_numeric",
    "el_optimizer",
    "inner_value_closed_form",
    "dual_bound",
    "maximize_over_q",
    "reconstruct_solution",
    "probe_conjugate",
]


@dataclass(frozen=True)
class Kernel:
    """Deterministic kernel, constant on ``K`` equal pieces of ``[0, T]``."""

    values: tuple
    T: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in np.atleast_1d(self.values)))
        if not self.values:
            raise ValueError("kernel needs at least one piece")
        if not self.T > 0:
            raise ValueError("kernel horizon must be positive")

    @classmethod
    def constant(cls, q: float, T: float = 1.0) -> "Kernel":
        return cls((q,), T)

    @property
    def K(self) -> int:
        return len(self.values)

    @property
    def breaks(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.K + 1)

    def __call__(self, t):
        i = np.clip(np.floor(np.asarray(t, float) / self.T * self.K).astype(int), 0, self.K - 1)
        return np.asarray(self.values)[i]

    def integral(self, a=0.0, b=None) -> np.ndarray:
        """``int_a^b q(s) ds``, exact for the piecewise-constant kernel."""
        b = self.T if b is None else b
        cum = np.concatenate([[0.0], np.cumsum(self.values) * (self.T / self.K)])

        def F(t):
            t = np.clip(np.asarray(t, float), 0.0, self.T)
            i = np.clip(np.floor(t / self.T * self.K).astype(int), 0, self.K - 1)
            return cum[i] + np.asarray(self.values)[i] * (t - self.breaks[i])

        return F(b) - F(a)

    def tail(self, t) -> np.ndarray:
        """``R(t) = int_t^T q(s) ds``."""
        return self.integral(t, self.T)

    def on_tree(self, tree: ScenarioTree) -> np.ndarray:
        """Node kernel taking the piece value at each level's left endpoint."""
        per_level = self(tree.grid.times[:-1] - tree.grid.t0)
        return np.repeat(per_level, 2 ** np.arange(tree.N))

    def describe(self):
        return {"type": "piecewise_constant", "T": self.T, "values": list(self.values)}


def _as_measure(tree: ScenarioTree, Q) -> GirsanovMeasure:
    if isinstance(Q, GirsanovMeasure):
        return Q
    if isinstance(Q, Kernel):
        return girsanov_reweight(tree, Q.on_tree(tree))
    return girsanov_reweight(tree, Q)


def _kernel_description(Q: GirsanovMeasure, kernel: Optional[Kernel]):
    if kernel is not None:
        return kernel.describe()
    tree = Q.tree
    levels = [Q.q[tree.level(k)] for k in range(tree.N)]
    if all(np.all(lv == lv[0]) for lv in levels):
        return {"type": "per_level", "values": [float(lv[0]) for lv in levels]}
    return {"type": "per_node", "values": [float(v) for v in Q.q]}


# ----------------------------------------------------------------------------
# inner problem on the tree


@dataclass
class InnerResult:
    estar: float
    ct: ControlTriple = field(repr=False)
    iterations: int = 0
    converged: bool = True
    restart_values: list = field(default_factory=list)
    max_control_spread: float = 0.0

    def __iter__(self):
        yield self.estar
        yield self.ct


def _inner_objective(tree, gen, Q, z0):
    zeros = np.zeros(tree.n_leaves)
    weights = (Q.p_up, Q.p_down)

    def fun(x):
        d, g = _split(tree, x)
        Z, _ = propagate(tree, z0, d, g)
        Y, _, _, _, grad = _backward(tree, gen, zeros, Z, d, g, weights=weights, want_grad=True)
        return Y[0], grad

    return fun


def inner_value_numeric(tree: ScenarioTree, gen: Generator, Q, z0: float = 0.0,
                        cfg: Optional[SolverConfig] = None, x0=None) -> InnerResult:
    """``E*(Q)`` and its optimizing control on the tree.

    Minimizes ``F = E_Q[sum g*dt - int Z dW]`` over the node controls, from
    the zero control and ``cfg.restarts - 1`` seeded random starts (or from
    ``x0``); ``E*(Q) = -min F``.
    """
    cfg = cfg or SolverConfig()
    if not gen.y_independent:
        raise ValueError("the conjugate is only defined here for y-independent generators")
    Q = _as_measure(tree, Q)
    n = tree.n_internal
    fun = _inner_objective(tree, gen, Q, z0)
    project = _projector(tree, gen, z0)
    bounds = _bounds(tree, gen)
    if x0 is not None:
        starts = [np.asarray(x0, float)]
    else:
        starts = [np.zeros(2 * n)]
        for r in range(1, cfg.restarts):
            rng = np.random.default_rng([cfg.seed, 1000 + r])
            starts.append(0.5 * rng.standard_normal(2 * n))
    results = []
    for s in starts:
        if gen.domain is not None and gen.domain.constrains_z:
            res = projected_subgradient(fun, s, project, cfg.step0, cfg.max_iters, cfg.decay)
        else:
            res = lbfgs(fun, project(s), bounds=bounds, maxiter=cfg.max_iters)
        results.append(res)
    vals = [r.fun for r in results]
    best = int(np.argmin(vals))
    d, g = _split(tree, results[best].x)
    ct = synthesize(tree, z0, d, g)
    spread = 0.0
    if len(results) > 1:
        spread = float(max(np.max(np.abs(r.x - results[best].x)) for r in results))
    return InnerResult(0.0 - float(vals[best]), ct, sum(r.iterations for r in results),
                       all(r.converged for r in results), [0.0 - v for v in vals], spread)


# ----------------------------------------------------------------------------
# closed form for the quadratic generator


@dataclass
class ELOptimizer:
    t: np.ndarray
    delta: np.ndarray
    gamma: np.ndarray
    c1: float
    c2: float
    min_F1: float
    min_F2: float


def _deterministic_kernel(q, T) -> Kernel:
    if isinstance(q, Kernel):
        return q
    if isinstance(q, GirsanovMeasure):
        tree = q.tree
        levels = [q.q[tree.level(k)] for k in range(tree.N)]
        if not all(np.all(lv == lv[0]) for lv in levels):
            raise ValueError("closed form needs a deterministic kernel; this one varies across nodes of a level")
        return Kernel([lv[0] for lv in levels], tree.T)
    if callable(q):
        raise TypeError("pass a Kernel or an array of piece values, not a callable")
    arr = np.atleast_1d(np.asarray(q, float))
    if arr.ndim != 1:
        raise ValueError("closed form needs a deterministic kernel given as one value per time piece")
    return Kernel(arr, T)


def _check_quadratic(gen: Optional[Generator]):
    if gen is None:
        return
    if gen.dim != 1:
        raise ValueError("closed-form optimizer is derived for d = 1 only")
    if gen.name != "quadratic" or gen.domain is not None:
        raise ValueError(f"closed-form optimizer needs the plain quadratic generator, got {gen.name}")


def _piece_grids(kernel: Kernel, n_per_piece: int):
    """Sub-grids per piece; each includes both piece endpoints."""
    b = kernel.breaks
    return [np.linspace(b[i], b[i + 1], n_per_piece + 1) for i in range(kernel.K)]


def el_optimizer(q, T: float = 1.0, n_points: int = 2001, gen: Optional[Generator] = None) -> ELOptimizer:
    """Optimal ``(Delta, Gamma)`` for a deterministic kernel and ``g = d^2 + g^2``.

    The Euler-Lagrange family ``Delta = -1/2 int_0^t q + c1`` and
    ``Gamma = -1/2 q (int_0^t q + c2)`` leaves ``c1, c2`` free; minimizing the
    functional pointwise after swapping the order of integration fixes
    ``c1 = 1/2 int_0^T q`` and ``c2 = -int_0^T q``, i.e. both vanish at ``T``.
    """
    _check_quadratic(gen)
    kernel = _deterministic_kernel(q, T)
    t = np.linspace(0.0, kernel.T, n_points)
    R = kernel.tail(t)
    qt = kernel(t)
    total = float(kernel.integral())
    F1 = F2 = 0.0
    for i, grid in enumerate(_piece_grids(kernel, 20000)):
        Rg = kernel.tail(grid)
        qg = kernel.values[i]
        F1 -= 0.25 * trapezoid(Rg**2, grid)
        F2 -= 0.25 * trapezoid(qg**2 * Rg**2, grid)
    return ELOptimizer(t, 0.5 * R, 0.5 * qt * R, 0.5 * total, -total, float(F1), float(F2))


def inner_value_closed_form(q, T: float = 1.0, z0: float = 0.0, n_per_piece: int = 20000,
                            gen: Optional[Generator] = None) -> float:
    """``1/4 int R^2 (1 + q^2) + z0 int q`` by the trapezoidal rule on each piece."""
    _check_quadratic(gen)
    kernel = _deterministic_kernel(q, T)
    val = 0.0
    for i, grid in enumerate(_piece_grids(kernel, n_per_piece)):
        Rg = kernel.tail(grid)
        val += 0.25 * (1.0 + kernel.values[i] ** 2) * trapezoid(Rg**2, grid)
    return float(val + z0 * kernel.integral())


# ----------------------------------------------------------------------------
# bounds, outer search, reconstruction


@dataclass
class DualReport:
    kernel: dict
    estar: float
    bound: float
    gap: Optional[float]
    method: str
    iterations: int
    tolerance: float
    inner: Optional[InnerResult] = field(default=None, repr=False)
    measure: Optional[GirsanovMeasure] = field(default=None, repr=False)

    FIELDS = ("kernel", "estar", "bound", "gap", "method", "iterations", "tolerance")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.FIELDS}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=False)


def dual_bound(tree: ScenarioTree, gen: Generator, xi, z0: float, Q, method: str = "numeric",
               primal_value: Optional[float] = None, cfg: Optional[SolverConfig] = None,
               x0=None) -> DualReport:
    """Weak-duality lower bound ``E_Q[xi] - E*(Q)`` on the minimal value."""
    cfg = cfg or SolverConfig()
    xi = leaf_values(tree, xi)
    kernel = Q if isinstance(Q, Kernel) else None
    mu = _as_measure(tree, Q)
    inner = None
    if method == "numeric":
        inner = inner_value_numeric(tree, gen, mu, z0, cfg, x0=x0)
        estar, iters = inner.estar, inner.iterations
        tol = 1e-9 * (1 + abs(estar))
    elif method == "closed_form":
        _check_quadratic(gen)
        estar = inner_value_closed_form(_deterministic_kernel(kernel if kernel is not None else mu, tree.T),
                                        tree.T, z0)
        iters, tol = 0, tree.dt
    else:
        raise ValueError(f"method must be 'numeric' or 'closed_form', got {method!r}")
    bound = expectation(tree, xi, mu) - estar
    gap = None if primal_value is None else float(primal_value - bound)
    return DualReport(_kernel_description(mu, kernel), float(estar), float(bound), gap, method, int(iters),
                      float(tol), inner, mu)


@dataclass
class AscentResult:
    kernel: Kernel
    report: DualReport
    history: list
    evaluations: int

    def __iter__(self):
        yield self.report.measure
        yield self.report


def maximize_over_q(tree: ScenarioTree, gen: Generator, xi, z0: float = 0.0, K: int = 2,
                    q_max: float = 1.0, cfg: Optional[SolverConfig] = None, sweeps: int = 2,
                    primal_value: Optional[float] = None) -> AscentResult:
    """Coordinate ascent over piecewise-constant kernels with ``|q| <= q_max``.

    Each coordinate is maximized with a bounded scalar search (Brent's
    method); a move is kept only if it raises the bound, so the recorded
    history is nondecreasing.  Heuristic: no global optimality is claimed.
    """
    cfg = cfg or SolverConfig(restarts=1)
    xi = leaf_values(tree, xi)
    if not q_max * tree.sqrt_dt < 1.0:
        raise ValueError(f"q_max*sqrt(dt) = {q_max * tree.sqrt_dt:.4g} >= 1; reweighting would be inadmissible")
    single = SolverConfig(**{**cfg.__dict__, "restarts": 1})
    vals = np.zeros(K)
    evals = 0

    def bound_of(v):
        nonlocal evals
        evals += 1
        return dual_bound(tree, gen, xi, z0, Kernel(v, tree.T), "numeric", cfg=single)

    best = bound_of(vals)
    history = [best.bound]
    for _ in range(sweeps):
        for i in range(K):
            def neg(x, i=i):
                trial = vals.copy()
                trial[i] = x
                return -bound_of(trial).bound

            r = minimize_scalar(neg, bounds=(-q_max, q_max), method="bounded",
                                options=dict(xatol=1e-4 * max(q_max, 1e-12)))
            trial = vals.copy()
            trial[i] = float(r.x)
            cand = bound_of(trial)
            if cand.bound > best.bound:
                vals, best = trial, cand
            history.append(best.bound)
    best = dual_bound(tree, gen, xi, z0, Kernel(vals, tree.T), "numeric", primal_value, single)
    best.iterations = evals
    return AscentResult(Kernel(vals, tree.T), best, history, evals)


@dataclass
class ReconstructionReport:
    defect: float
    expected_defect: float
    witness_defect: Optional[float]
    certified_bound: Optional[float]
    gap: Optional[float]
    certified: bool

    def __bool__(self):
        return self.certified


def reconstruct_solution(tree: ScenarioTree, gen: Generator, xi, z0: float, Q, primal_value: float,
                         witness: Optional[Supersolution] = None, cfg: Optional[SolverConfig] = None,
                         tol: float = 1e-6):
    """Candidate solution ``Y = value - int g dt + int Z dW`` from the inner optimizer.

    ``defect`` is ``max |Y_T - xi|`` for the dual optimizer's control and
    ``expected_defect = E_Q[Y_T - xi]``, which equals the duality gap.  With a
    primal ``witness`` the construction is repeated with its control: then
    ``Y_T >= xi`` and ``E_Q[Y_T - xi] <= gap``, so ``max(Y_T - xi) <=
    gap / min_leaf Q`` is certified.
    """
    xi = leaf_values(tree, xi)
    mu = _as_measure(tree, Q)
    inner = inner_value_numeric(tree, gen, mu, z0, cfg)
    ct = inner.ct

    def forward(ct):
        Y = np.empty(tree.n_nodes)
        Y[0] = primal_value
        times = tree.grid.times
        for k in range(tree.N):
            sl, ch = tree.level(k), tree.level(k + 1)
            g = gen.eval(times[k], Y[sl], ct.Z[sl], ct.delta[sl], ct.gamma[sl])
            Y[ch] = np.repeat(Y[sl] - g * tree.dt, 2) + np.repeat(ct.Z[sl], 2) * tree.dW[ch]
        return Y

    Y = forward(ct)
    diff = Y[tree.leaves] - xi
    defect = float(np.max(np.abs(diff)))
    expected = expectation(tree, diff, mu)
    gap = float(primal_value - (expectation(tree, xi, mu) - inner.estar))
    wdef = cert = None
    certified = defect <= max(gap, 0.0) + tol
    if witness is not None:
        Yw = forward(witness.ct)
        dw = Yw[tree.leaves] - xi
        wdef = float(np.max(dw))
        cert = max(gap, 0.0) / float(np.min(mu.leaf_prob))
        certified = certified or (float(np.min(dw)) >= -tol and wdef <= cert + tol)
    A, drep = decompose(tree, Y, ct, gen)
    sol = Supersolution(Y, ct, A, float(primal_value), None, drep)
    return sol, ReconstructionReport(defect, float(expected), wdef, cert, gap, bool(certified))


def probe_conjugate(tree: ScenarioTree, gen: Generator, v, n_max: int = 20, z0: float = 0.0,
                    cfg: Optional[SolverConfig] = None) -> list:
    """Lower bounds ``E[v xi_n] - E(xi_n)`` on the conjugate at a leaf density ``v``.

    Witness sequence: ``xi_n = -n * 1{v < 0}`` when ``v`` has a negative
    part, ``xi_n = n`` when ``E[v] > 1`` and ``xi_n = -n`` when ``E[v] < 1``
    (constants otherwise).  Rows are ``(n, kind, E[v xi_n], E(xi_n), bound)``
    for ``n = 0..n_max``; unbounded growth shows ``v`` is outside the domain.
    """
    from .primal import minimal_value

    v = leaf_values(tree, v)
    Ev = expectation(tree, v)
    if np.any(v < 0):
        kind, base = "negative_part", -(v < 0).astype(float)
    elif Ev < 1.0:
        kind, base = "mass_below_one", -np.ones(tree.n_leaves)
    else:
        kind, base = "mass_above_one" if Ev > 1.0 else "normalized", np.ones(tree.n_leaves)
    cfg = cfg or SolverConfig(restarts=1)
    rows = []
    for n in range(n_max + 1):
        xi_n = n * base
        val = minimal_value(tree, gen, xi_n, z0, cfg)[0]
        lin = expectation(tree, v * xi_n)
        rows.append((n, kind, lin, val, lin - val))
    return rows
