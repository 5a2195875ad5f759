"""Binary scenario trees, adapted processes and discrete Girsanov reweighting.

Nodes are stored in heap order: the root has id 0 and the children of node
``i`` are ``2*i + 1`` (up move, ``+sqrt(dt)``) and ``2*i + 2`` (down move).
Level ``k`` therefore occupies the contiguous slice ``[2**k - 1, 2**(k+1) - 1)``
and leaves are read left to right in that order.  Every reduction in this
module follows that fixed order so results are bit-reproducible.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

__all__ = [
    "TimeGrid",
    "ScenarioTree",
    "AdaptedProcess",
    "GirsanovMeasure",
    "PathEnsemble",
    "TreeSizeError",
    "KernelTooLargeError",
    "build_tree",
    "expectation",
    "conditional_expectation",
    "girsanov_reweight",
    "is_supermartingale",
    "SupermartingaleReport",
    "mc_paths",
    "DEFAULT_MAX_DEPTH",
]

DEFAULT_MAX_DEPTH = 16


class TreeSizeError(ValueError):
    """Requested tree depth exceeds the configured cap."""


class KernelTooLargeError(ValueError):
    """A Girsanov kernel would produce a non-positive edge probability."""


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_k = t0 + k*dt`` on ``[t0, t0 + T]``."""

    T: float
    N: int
    t0: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.T) or self.T <= 0:
            raise ValueError(f"horizon T must be positive, got {self.T}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"number of steps N must be a positive integer, got {self.N}")

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.N + 1)


def _level_slice(k: int) -> slice:
    return slice(2**k - 1, 2 ** (k + 1) - 1)


@dataclass(frozen=True, eq=False)
class ScenarioTree:
    """Non-recombining Rademacher tree for a one-dimensional Brownian motion.

    Attributes
    ----------
    grid : TimeGrid
    W : ndarray
        Brownian value at every node (heap order).
    dW : ndarray
        Increment on the edge into each node; 0 at the root.
    """

    grid: TimeGrid
    W: np.ndarray = field(repr=False)
    dW: np.ndarray = field(repr=False)
    dim: int = 1

    @property
    def N(self) -> int:
        return self.grid.N

    @property
    def T(self) -> float:
        return self.grid.T

    @property
    def dt(self) -> float:
        return self.grid.dt

    @property
    def sqrt_dt(self) -> float:
        return float(np.sqrt(self.grid.dt))

    @property
    def n_nodes(self) -> int:
        return 2 ** (self.N + 1) - 1

    @property
    def n_internal(self) -> int:
        return 2**self.N - 1

    @property
    def n_leaves(self) -> int:
        return 2**self.N

    def level(self, k: int) -> slice:
        if not 0 <= k <= self.N:
            raise IndexError(f"level {k} outside 0..{self.N}")
        return _level_slice(k)

    @property
    def leaves(self) -> slice:
        return _level_slice(self.N)

    @property
    def levels(self) -> np.ndarray:
        """Level index of every node."""
        return np.repeat(np.arange(self.N + 1), 2 ** np.arange(self.N + 1))

    @property
    def node_times(self) -> np.ndarray:
        return self.grid.t0 + self.dt * self.levels

    @property
    def parents(self) -> np.ndarray:
        p = (np.arange(self.n_nodes) - 1) // 2
        p[0] = -1
        return p

    @property
    def W_T(self) -> np.ndarray:
        return self.W[self.leaves]

    @property
    def reference(self) -> "GirsanovMeasure":
        return girsanov_reweight(self, np.zeros(self.n_internal))

    def descendants(self, node: int, depth: int) -> slice:
        """Heap slice of the descendants of ``node`` that sit ``depth`` levels below it."""
        k = int(np.floor(np.log2(node + 1)))
        j = node - (2**k - 1)
        start = 2 ** (k + depth) - 1 + j * 2**depth
        return slice(start, start + 2**depth)

    def subtree_index(self, node: int) -> np.ndarray:
        """Indices (into this tree) of the subtree rooted at ``node``, in the subtree's heap order."""
        k = int(np.floor(np.log2(node + 1)))
        parts = []
        for m in range(self.N - k + 1):
            s = self.descendants(node, m)
            parts.append(np.arange(s.start, s.stop))
        return np.concatenate(parts)

    def subtree(self, node: int) -> "ScenarioTree":
        """The tree hanging below ``node``, with its own time origin and W offset."""
        k = int(np.floor(np.log2(node + 1)))
        if k >= self.N:
            raise ValueError("a leaf has no subtree")
        idx = self.subtree_index(node)
        grid = TimeGrid(self.T - k * self.dt, self.N - k, t0=self.grid.t0 + k * self.dt)
        dW = self.dW[idx].copy()
        dW[0] = 0.0
        return ScenarioTree(grid, self.W[idx].copy(), dW)

    def to_csv(self, path, measure: Optional["GirsanovMeasure"] = None) -> None:
        """Dump ``node_id, level, parent, dW, probability`` rows."""
        mu = measure if measure is not None else self.reference
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node_id", "level", "parent", "dW", "probability"])
            for i, (lv, par, dw, p) in enumerate(
                zip(self.levels, self.parents, self.dW, mu.node_prob)
            ):
                w.writerow([i, int(lv), int(par), repr(float(dw)), repr(float(p))])


def build_tree(T: float, N: int, max_depth: int = DEFAULT_MAX_DEPTH) -> ScenarioTree:
    """Enumerate every path of a depth-``N`` Rademacher tree on ``[0, T]``.

    Raises
    ------
    TreeSizeError
        If ``N > max_depth``; the tree has ``2**(N+1) - 1`` nodes.
    """
    grid = TimeGrid(float(T), int(N))
    if N > max_depth:
        raise TreeSizeError(
            f"depth N={N} exceeds cap {max_depth}: a non-recombining tree has "
            f"2**(N+1)-1 = {2 ** (N + 1) - 1} nodes"
        )
    s = float(np.sqrt(grid.dt))
    n = 2 ** (N + 1) - 1
    W = np.zeros(n)
    dW = np.zeros(n)
    for k in range(N):
        par = W[_level_slice(k)]
        ch = _level_slice(k + 1)
        dW[ch][0::2] = s
        dW[ch][1::2] = -s
        W[ch] = np.repeat(par, 2) + dW[ch]
    return ScenarioTree(grid, W, dW)


class AdaptedProcess(np.lib.mixins.NDArrayOperatorsMixin):
    """One value per tree node (or per non-leaf node for controls).

    Storage is the heap layout of the tree, so a node value is determined by
    its path prefix by construction.  Arithmetic falls through to numpy.
    """

    ROLES = ("value", "control", "delta", "gamma", "density", "integral", "slack", "kernel")

    def __init__(self, tree: ScenarioTree, values, role: str = "value"):
        values = np.asarray(values, dtype=float)
        if role not in self.ROLES:
            raise ValueError(f"unknown role {role!r}")
        if values.shape[0] not in (tree.n_nodes, tree.n_internal):
            raise ValueError(
                f"expected {tree.n_nodes} (all nodes) or {tree.n_internal} (non-leaf) "
                f"values, got {values.shape[0]}"
            )
        self.tree = tree
        self.values = values
        self.role = role

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self):
        return len(self.values)

    def __getitem__(self, item):
        return self.values[item]

    def at_level(self, k: int) -> np.ndarray:
        return self.values[self.tree.level(k)]

    def __repr__(self):
        return f"AdaptedProcess(role={self.role!r}, n={len(self.values)})"


@dataclass(frozen=True, eq=False)
class GirsanovMeasure:
    """Reweighted tree measure with up-probability ``(1 + q*sqrt(dt))/2`` per node.

    Attributes
    ----------
    q : ndarray
        Kernel per non-leaf node.
    p_up, p_down : ndarray
        Edge probabilities per non-leaf node, ``p_up + p_down == 1`` exactly.
    node_prob : ndarray
        Probability of reaching each node.
    density : ndarray
        Likelihood ratio against the reference measure at every node.
    """

    tree: ScenarioTree
    q: np.ndarray = field(repr=False)
    p_up: np.ndarray = field(repr=False)
    p_down: np.ndarray = field(repr=False)
    node_prob: np.ndarray = field(repr=False)
    density: np.ndarray = field(repr=False)

    @property
    def leaf_prob(self) -> np.ndarray:
        return self.node_prob[self.tree.leaves]

    @property
    def is_reference(self) -> bool:
        return bool(np.all(self.q == 0.0))

    def restrict(self, node: int) -> "GirsanovMeasure":
        """Conditional measure on the subtree rooted at ``node``."""
        sub = self.tree.subtree(node)
        idx = self.tree.subtree_index(node)[: sub.n_internal]
        return girsanov_reweight(sub, self.q[idx])


def girsanov_reweight(tree: ScenarioTree, q) -> GirsanovMeasure:
    """Tilt the reference edge weights so that ``E[dW | node] = q(node) * dt``.

    ``q`` may be a scalar, one value per level (length ``N``) or one value per
    non-leaf node.  Both edge weights must stay strictly positive, which is the
    tree counterpart of a density bounded and bounded away from zero.
    """
    q = np.asarray(q, dtype=float)
    if q.ndim == 0:
        q = np.full(tree.n_internal, float(q))
    elif q.shape == (tree.N,) and tree.N != tree.n_internal:
        q = np.repeat(q, 2 ** np.arange(tree.N))
    if q.shape != (tree.n_internal,):
        raise ValueError(f"kernel must have {tree.n_internal} node values, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise ValueError("kernel has non-finite entries")
    x = q * tree.sqrt_dt
    if np.any(np.abs(x) >= 1.0):
        i = int(np.argmax(np.abs(x)))
        raise KernelTooLargeError(
            f"|q|*sqrt(dt) = {abs(x[i]):.6g} >= 1 at node {i}; edge probability would be <= 0"
        )
    p_up = 0.5 * (1.0 + x)
    p_down = 0.5 * (1.0 - x)
    # Complement the larger weight so p_up + p_down == 1 holds exactly (Sterbenz).
    big = p_up >= 0.5
    p_down = np.where(big, 1.0 - p_up, p_down)
    p_up = np.where(big, p_up, 1.0 - p_down)

    node_prob = np.empty(tree.n_nodes)
    density = np.empty(tree.n_nodes)
    node_prob[0] = 1.0
    density[0] = 1.0
    for k in range(tree.N):
        s, ch = tree.level(k), tree.level(k + 1)
        pp = np.empty(2 ** (k + 1))
        pp[0::2] = p_up[s]
        pp[1::2] = p_down[s]
        node_prob[ch] = np.repeat(node_prob[s], 2) * pp
        density[ch] = np.repeat(density[s], 2) * (2.0 * pp)
    return GirsanovMeasure(tree, q, p_up, p_down, node_prob, density)


def _measure(tree: ScenarioTree, mu: Optional[GirsanovMeasure]) -> GirsanovMeasure:
    if mu is None:
        return tree.reference
    if mu.tree.N != tree.N or mu.tree.dt != tree.dt:
        raise ValueError("measure was built on a different tree")
    return mu


def conditional_expectation(tree: ScenarioTree, X, mu: Optional[GirsanovMeasure] = None) -> np.ndarray:
    """One-step conditional expectation of level-``k+1`` values onto level ``k``."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    k1 = int(np.log2(n)) if n > 0 else -1
    if n < 2 or 2**k1 != n or k1 > tree.N:
        raise IndexError(f"{n} values do not form a level 1..{tree.N} of the tree")
    mu = _measure(tree, mu)
    s = tree.level(k1 - 1)
    return mu.p_up[s] * X[0::2] + mu.p_down[s] * X[1::2]


def expectation(tree: ScenarioTree, X, mu: Optional[GirsanovMeasure] = None) -> float:
    """Expectation of a leaf-indexed variable.

    Evaluated by backward conditioning (pairwise, left to right), so the
    tower property holds by construction and constants integrate exactly
    whenever ``p_up*c + p_down*c`` rounds to ``c``.
    """
    X = np.asarray(X, dtype=float)
    if X.shape != (tree.n_leaves,):
        raise ValueError(f"expected {tree.n_leaves} leaf values, got shape {X.shape}")
    mu = _measure(tree, mu)
    for _ in range(tree.N):
        X = conditional_expectation(tree, X, mu)
    return float(X[0])


@dataclass
class SupermartingaleReport:
    ok: bool
    worst_node: int
    worst_slack: float

    def __bool__(self):
        return self.ok


def is_supermartingale(tree: ScenarioTree, Y, mu: Optional[GirsanovMeasure] = None, tol: float = 1e-12) -> SupermartingaleReport:
    """Check ``Y(node) >= E_mu[Y(child) | node] - tol`` at every non-leaf node."""
    Y = np.asarray(Y, dtype=float)
    if Y.shape != (tree.n_nodes,):
        raise ValueError(f"expected {tree.n_nodes} node values, got shape {Y.shape}")
    mu = _measure(tree, mu)
    slack = np.empty(tree.n_internal)
    for k in range(tree.N):
        slack[tree.level(k)] = Y[tree.level(k)] - conditional_expectation(tree, Y[tree.level(k + 1)], mu)
    i = int(np.argmin(slack))
    return SupermartingaleReport(bool(slack[i] >= -tol), i, float(slack[i]))


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """Independent Gaussian paths; ``dW`` has shape ``(n_paths, N, d)``."""

    grid: TimeGrid
    dW: np.ndarray = field(repr=False)

    @property
    def W(self) -> np.ndarray:
        n, N, d = self.dW.shape
        out = np.zeros((n, N + 1, d))
        np.cumsum(self.dW, axis=1, out=out[:, 1:])
        return out

    @property
    def n_paths(self) -> int:
        return self.dW.shape[0]

    @property
    def dim(self) -> int:
        return self.dW.shape[2]


def mc_paths(T: float, N: int, d: int, n_paths: int, seed: Union[int, None] = 0) -> PathEnsemble:
    """Sample ``n_paths`` Brownian paths with ``N`` Gaussian increments in dimension ``d``."""
    if int(d) != d or d < 1:
        raise ValueError(f"dimension d must be >= 1, got {d}")
    if int(n_paths) != n_paths or n_paths < 1:
        raise ValueError(f"n_paths must be >= 1, got {n_paths}")
    grid = TimeGrid(float(T), int(N))
    rng = np.random.default_rng(seed)
    dW = rng.standard_normal((int(n_paths), grid.N, int(d))) * np.sqrt(grid.dt)
    return PathEnsemble(grid, dW)
