"""Controls ``Z = z + int Delta du + int Gamma dW`` on a scenario tree.

Convention shared by every module: ``Z``, ``Delta`` and ``Gamma`` are read at
the left endpoint of each step, so

    Z(child)        = Z(node) + Delta(node)*dt + Gamma(node)*dW(edge)
    int Z dW(child) = int Z dW(node) + Z(node)*dW(edge)

``Delta`` and ``Gamma`` live on the ``2**N - 1`` non-leaf nodes only.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .lattice import GirsanovMeasure, ScenarioTree, is_supermartingale, expectation

__all__ = [
    "ControlTriple",
    "NormReport",
    "synthesize",
    "propagate",
    "l2_norm",
    "verify_theta_M",
    "z_l2_bound",
    "check_admissible",
]


@dataclass(frozen=True, eq=False)
class ControlTriple:
    tree: ScenarioTree = field(repr=False)
    z0: float
    delta: np.ndarray = field(repr=False)
    gamma: np.ndarray = field(repr=False)
    Z: np.ndarray = field(repr=False)
    integral: np.ndarray = field(repr=False)

    def to_csv(self, path, Y: Optional[np.ndarray] = None, A: Optional[np.ndarray] = None) -> None:
        """Write ``node_id, Z, Delta, Gamma, intZdW`` (plus ``Y``/``A`` when given)."""
        n_int = self.tree.n_internal
        pad = np.full(self.tree.n_nodes - n_int, np.nan)
        cols = {
            "node_id": np.arange(self.tree.n_nodes),
            "Z": self.Z,
            "Delta": np.concatenate([self.delta, pad]),
            "Gamma": np.concatenate([self.gamma, pad]),
            "intZdW": self.integral,
        }
        if Y is not None:
            cols["Y"] = Y
        if A is not None:
            cols["A"] = A
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(list(cols))
            for row in zip(*cols.values()):
                w.writerow([int(row[0])] + ["" if np.isnan(v) else repr(float(v)) for v in row[1:]])


def _node_array(tree: ScenarioTree, x, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        return np.full(tree.n_internal, float(x))
    if x.shape == (tree.n_nodes,):
        return x[: tree.n_internal].copy()
    if x.shape != (tree.n_internal,):
        raise ValueError(f"{name} must have {tree.n_internal} non-leaf values, got shape {x.shape}")
    return x


def propagate(tree: ScenarioTree, z0: float, delta: np.ndarray, gamma: np.ndarray):
    """Forward recursion for ``Z`` and ``int Z dW`` on every node."""
    Z = np.empty(tree.n_nodes)
    integral = np.empty(tree.n_nodes)
    Z[0] = z0
    integral[0] = 0.0
    dt = tree.dt
    for k in range(tree.N):
        s, ch = tree.level(k), tree.level(k + 1)
        dW = tree.dW[ch]
        zk = np.repeat(Z[s], 2)
        Z[ch] = zk + np.repeat(delta[s], 2) * dt + np.repeat(gamma[s], 2) * dW
        integral[ch] = np.repeat(integral[s], 2) + zk * dW
    return Z, integral


def synthesize(tree: ScenarioTree, z0: float, delta, gamma, check: bool = True) -> ControlTriple:
    """Build ``Z`` and ``int Z dW`` from ``(z0, Delta, Gamma)``.

    With ``check`` the martingale property of the stochastic integral under
    the reference measure is asserted rather than assumed.
    """
    z0 = float(np.asarray(z0).reshape(-1)[0]) if np.ndim(z0) else float(z0)
    delta = _node_array(tree, delta, "Delta")
    gamma = _node_array(tree, gamma, "Gamma")
    Z, integral = propagate(tree, z0, delta, gamma)
    if check:
        rep = check_admissible_arrays(tree, integral)
        if not rep.ok:
            raise AssertionError(f"stochastic integral fails the martingale check at node {rep.worst_node}")
    return ControlTriple(tree, z0, delta, gamma, Z, integral)


def l2_norm(tree: ScenarioTree, X, mu: Optional[GirsanovMeasure] = None) -> float:
    """``(E_mu[sum_k |X_k|^2 dt])**0.5`` over the non-leaf nodes."""
    X = np.asarray(X, dtype=float)
    if X.shape[0] not in (tree.n_nodes, tree.n_internal):
        raise ValueError(f"expected node values, got shape {X.shape}")
    X = X[: tree.n_internal]
    prob = (mu if mu is not None else tree.reference).node_prob[: tree.n_internal]
    sq = X**2 if X.ndim == 1 else np.sum(X.reshape(X.shape[0], -1) ** 2, axis=1)
    return float(np.sqrt(np.sum(prob * sq) * tree.dt))


@dataclass
class NormReport:
    ok: bool
    delta_norm: float
    gamma_norm: float
    bound: float

    def __bool__(self):
        return self.ok


def verify_theta_M(ct: ControlTriple, M: float) -> NormReport:
    """Membership test for ``max(||Delta||, ||Gamma||) <= M`` (closed set)."""
    dn = l2_norm(ct.tree, ct.delta)
    gn = l2_norm(ct.tree, ct.gamma)
    return NormReport(bool(max(dn, gn) <= M + 1e-12), dn, gn, float(M))


def z_l2_bound(ct: ControlTriple) -> float:
    """Upper bound on ``||Z||`` from the decomposition norms.

    ``|Z_t|^2 <= 4(|z|^2 + t*int|Delta|^2 + |int Gamma dW|^2)`` gives
    ``||Z||^2 <= 4T(|z|^2 + max(T, 1)*||Delta||^2 + ||Gamma||^2)``; for
    ``T <= 1`` the factor on ``||Delta||^2`` is one.
    """
    T = ct.tree.T
    dn = l2_norm(ct.tree, ct.delta)
    gn = l2_norm(ct.tree, ct.gamma)
    bound = float(np.sqrt(4.0 * T * (ct.z0**2 + max(T, 1.0) * dn**2 + gn**2)))
    zn = l2_norm(ct.tree, ct.Z)
    assert zn <= bound * (1 + 1e-12) + 1e-300, f"||Z|| = {zn} exceeds bound {bound}"
    return bound


@dataclass
class AdmissibilityReport:
    ok: bool
    worst_node: int
    worst_slack: float
    note: str

    def __bool__(self):
        return self.ok


def check_admissible_arrays(tree: ScenarioTree, integral: np.ndarray, mu=None) -> AdmissibilityReport:
    scale = max(1.0, float(np.max(np.abs(integral))))
    rep = is_supermartingale(tree, integral, mu, tol=1e-12 * scale)
    mart = abs(expectation(tree, integral[tree.leaves], mu)) <= 1e-12 * scale * tree.N
    return AdmissibilityReport(rep.ok, rep.worst_node, rep.worst_slack,
                               "martingale (finite tree)" if mart else "supermartingale")


def check_admissible(ct: ControlTriple, mu: Optional[GirsanovMeasure] = None) -> AdmissibilityReport:
    """Supermartingale check of ``int Z dW``; always a martingale on a finite tree."""
    return check_admissible_arrays(ct.tree, ct.integral, mu)
