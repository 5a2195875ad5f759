"""Brute-force references for the solvers and the closed form.

These deliberately avoid the code paths they check: the grid search never
calls an optimizer, and the quadratic-program oracle discretizes the
double-integral functionals directly instead of the swapped-order form the
closed form uses.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import solveh_banded

from .dual import Kernel, _deterministic_kernel
from .generators import Generator
from .lattice import ScenarioTree
from .primal import leaf_values

__all__ = ["GridSpec", "GridTooLargeError", "brute_force_minimal", "QPOracleResult", "qp_inner_oracle",
           "fd_subgradient_check", "FDCheckReport", "DEFAULT_GRID_CAP"]

DEFAULT_GRID_CAP = 10**8


class GridTooLargeError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    """Per-node control grid: ``n`` equally spaced points on ``[lo, hi]`` for each of Delta, Gamma."""

    delta_lo: float = -2.0
    delta_hi: float = 2.0
    delta_n: int = 81
    gamma_lo: float = -2.0
    gamma_hi: float = 2.0
    gamma_n: int = 81
    cap: int = DEFAULT_GRID_CAP

    @classmethod
    def pitch(cls, h: float, lo: float = -2.0, hi: float = 2.0, cap: int = DEFAULT_GRID_CAP) -> "GridSpec":
        n = int(round((hi - lo) / h)) + 1
        return cls(lo, hi, n, lo, hi, n, cap)

    def points(self):
        d = np.linspace(self.delta_lo, self.delta_hi, self.delta_n)
        g = np.linspace(self.gamma_lo, self.gamma_hi, self.gamma_n)
        D, G = np.meshgrid(d, g, indexing="ij")
        return D.ravel(), G.ravel()

    @property
    def size(self) -> int:
        return self.delta_n * self.gamma_n


def brute_force_minimal(tree: ScenarioTree, gen: Generator, xi, z0: float = 0.0,
                        gs: Optional[GridSpec] = None, chunk: int = 256) -> float:
    """Exhaustive grid minimum of the root value for trees of depth 1 or 2.

    Controls at the last non-leaf level only move ``Z`` at the leaves, where
    it is never used, so they enter through their generator cost alone; the
    search over them is still exhaustive, nested under every root grid point.
    Evaluation count: ``|G|`` for ``N = 1`` and ``|G| + 2|G|^2`` for ``N = 2``.
    """
    gs = gs or GridSpec()
    if tree.N > 2:
        raise ValueError("brute force is limited to trees with N <= 2")
    xi = leaf_values(tree, xi)
    D, G = gs.points()
    n = D.size
    evals = n if tree.N == 1 else n + 2 * n * n
    if evals > gs.cap:
        raise GridTooLargeError(f"grid needs {evals} generator evaluations, cap is {gs.cap}")
    dt, s = tree.dt, tree.sqrt_dt
    t = tree.grid.times
    g0 = gen.eval(t[0], 0.0, z0, D, G)
    if tree.N == 1:
        tail = max(xi[0] - z0 * s, xi[1] + z0 * s)
        return float(np.min(g0 * dt + tail))
    best = np.inf
    for a in range(0, n, chunk):
        d0, g0c = D[a:a + chunk], G[a:a + chunk]
        level1 = []
        for j, sign in ((0, 1.0), (1, -1.0)):
            Z1 = z0 + d0 * dt + sign * g0c * s
            cost = gen.eval(t[1], 0.0, Z1[:, None], D[None, :], G[None, :])
            tail = np.maximum(xi[2 * j] - Z1 * s, xi[2 * j + 1] + Z1 * s)
            level1.append(np.min(cost, axis=1) * dt + tail)
        root = g0[a:a + chunk] * dt + np.maximum(level1[0] - z0 * s, level1[1] + z0 * s)
        best = min(best, float(np.min(root)))
    return best


@dataclass
class QPOracleResult:
    min_F1: float
    min_F2: float
    delta: np.ndarray
    gamma: np.ndarray
    t_mid: np.ndarray
    estar: float


def qp_inner_oracle(q, T: float = 1.0, z0: float = 0.0, N_fine: int = 2000) -> QPOracleResult:
    """Discretize the inner quadratic functionals and solve them exactly.

    With ``Delta`` constant on each of ``N_fine`` cells of width ``h``,

        J1 = h * sum Delta_i^2 - sum_i q_i * int_{cell i} int_0^u Delta ds du

    is a quadratic ``1/2 x'Hx - b'x`` with ``H = 2h I`` and
    ``b_i = h^2 (sum_{j>i} q_j + q_i/2)``; ``J2`` is the same with ``Delta``
    replaced by ``q*Gamma``.  The stationarity systems are solved by a banded
    Cholesky factorization.
    """
    if N_fine > 10**5:
        raise ValueError(f"N_fine={N_fine} exceeds 1e5")
    kernel = _deterministic_kernel(q, T)
    h = kernel.T / N_fine
    mid = (np.arange(N_fine) + 0.5) * h
    qv = kernel(mid)
    after = np.concatenate([np.cumsum(qv[::-1])[::-1][1:], [0.0]])  # sum_{j>i} q_j
    b1 = h**2 * (after + 0.5 * qv)
    b2 = qv * b1
    H = np.full((1, N_fine), 2.0 * h)
    x1 = solveh_banded(H, b1)
    x2 = solveh_banded(H, b2)
    if not (np.all(np.isfinite(x1)) and np.all(np.isfinite(x2))):
        raise AssertionError("stationarity system is singular")
    m1 = float(h * x1 @ x1 - b1 @ x1)
    m2 = float(h * x2 @ x2 - b2 @ x2)
    estar = -(m1 + m2) + z0 * h * float(np.sum(qv))
    return QPOracleResult(m1, m2, x1, x2, mid, estar)


@dataclass
class FDCheckReport:
    ok: bool
    max_rel_error: float
    worst_point: tuple

    def __bool__(self):
        return self.ok


def fd_subgradient_check(gen: Generator, points, rtol: float = 1e-5) -> FDCheckReport:
    """Compare the generator's gradient oracle with central differences.

    Two step sizes are used and the smaller discrepancy per point counts,
    which tolerates the truncation/round-off trade-off of either step.
    ``points`` is an iterable of ``(z, delta, gamma)`` in the finite region.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    z, d, g = pts[:, 0], pts[:, 1], pts[:, 2]
    an = np.stack(gen.gradient(0.0, 0.0, z, d, g), axis=1)
    errs = []
    for step in (1e-4, 1e-6):
        cols = []
        for i in range(3):
            h = step * np.maximum(1.0, np.abs(pts[:, i]))
            up, dn = pts.copy(), pts.copy()
            up[:, i] += h
            dn[:, i] -= h
            fu = gen.eval(0.0, 0.0, up[:, 0], up[:, 1], up[:, 2])
            fd = gen.eval(0.0, 0.0, dn[:, 0], dn[:, 1], dn[:, 2])
            cols.append((fu - fd) / (2 * h))
        num = np.stack(cols, axis=1)
        errs.append(np.max(np.abs(an - num) / np.maximum(1.0, np.abs(an)), axis=1))
    err = np.minimum(*errs)
    i = int(np.argmax(err))
    return FDCheckReport(bool(err[i] <= rtol), float(err[i]), tuple(pts[i]))
