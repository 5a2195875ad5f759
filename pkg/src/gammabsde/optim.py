"""First-order convex minimization used by the primal and dual solvers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

__all__ = ["SolverConfig", "OptResult", "projected_subgradient", "smoothed_lbfgs", "lbfgs"]


@dataclass(frozen=True)
class SolverConfig:
    """Knobs shared by the primal and inner dual solvers.

    ``tol_opt=None`` means the relative default ``1e-4 * (1 + |value|)``.
    ``method`` is ``"smoothed"`` (log-sum-exp continuation + L-BFGS-B, then a
    subgradient polish) or ``"subgradient"`` (projected subgradient only).
    """

    max_iters: int = 4000
    step0: float = 0.5
    decay: float = 0.5
    tol_opt: Optional[float] = None
    tol_feas: float = 1e-9
    restarts: int = 2
    seed: int = 0
    method: str = "smoothed"
    polish_iters: int = 200
    temperatures: Sequence[float] = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8)
    threads: int = 1

    def __post_init__(self):
        for name in ("max_iters", "step0", "decay", "tol_feas", "restarts"):
            if not getattr(self, name) > 0:
                raise ValueError(f"solver config field {name!r} must be positive, got {getattr(self, name)}")
        if self.tol_opt is not None and not self.tol_opt > 0:
            raise ValueError(f"solver config field 'tol_opt' must be positive, got {self.tol_opt}")
        if self.method not in ("smoothed", "subgradient"):
            raise ValueError(f"solver config field 'method' must be 'smoothed' or 'subgradient', got {self.method!r}")

    def tolerance(self, value: float) -> float:
        return self.tol_opt if self.tol_opt is not None else 1e-4 * (1.0 + abs(value))


@dataclass
class OptResult:
    x: np.ndarray
    fun: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)


def projected_subgradient(fun: Callable, x0: np.ndarray, project: Callable = None, step0: float = 0.5,
                          max_iters: int = 4000, decay: float = 0.5, stall: float = 1e-14) -> OptResult:
    """Normalized projected subgradient descent with best-iterate tracking.

    ``fun(x)`` returns ``(value, subgradient)``.  Step ``k`` has length
    ``step0 / (k + 1)**decay``; the method stops once the step falls below
    ``stall`` or the subgradient vanishes.
    """
    project = project or (lambda v: v)
    x = project(np.array(x0, dtype=float))
    f, g = fun(x)
    best_x, best_f = x.copy(), f
    history = [f]
    converged = False
    k = 0
    for k in range(1, max_iters + 1):
        nrm = np.linalg.norm(g)
        if not np.isfinite(f) or nrm == 0.0:
            converged = np.isfinite(f)
            break
        step = step0 / k**decay
        if step < stall:
            converged = True
            break
        x = project(x - step * g / nrm)
        f, g = fun(x)
        history.append(f)
        if f < best_f:
            best_x, best_f = x.copy(), f
    return OptResult(best_x, float(best_f), k, converged, history)


def lbfgs(fun: Callable, x0: np.ndarray, bounds=None, maxiter: int = 4000, gtol: float = 1e-12,
          ftol: float = 1e-15) -> OptResult:
    """Box-constrained L-BFGS on a smooth ``fun(x) -> (value, gradient)``."""
    r = minimize(fun, np.asarray(x0, float), jac=True, method="L-BFGS-B", bounds=bounds,
                 options=dict(maxiter=maxiter, ftol=ftol, gtol=gtol, maxcor=20))
    # ABNORMAL line-search exits at machine precision are a stall, not a failure
    ok = bool(r.success) or "ABNORMAL" in str(r.message)
    return OptResult(np.asarray(r.x), float(r.fun), int(r.nit), ok and r.nit < maxiter)


def smoothed_lbfgs(fun: Callable, x0: np.ndarray, temperatures: Sequence[float], bounds=None,
                   maxiter: int = 4000) -> OptResult:
    """Continuation over a decreasing temperature schedule.

    ``fun(x, tau)`` is a smooth surrogate whose gap to the target objective
    shrinks linearly in ``tau``; each stage warm-starts from the previous one.
    """
    x = np.asarray(x0, float)
    its = 0
    res = None
    for tau in temperatures:
        res = lbfgs(lambda v: fun(v, tau), x, bounds=bounds, maxiter=maxiter)
        x = res.x
        its += res.iterations
    return OptResult(x, res.fun, its, res.converged)
