"""Primal value against a generic conic solver (skipped without cvxpy)."""

import numpy as np
import pytest

from gammabsde import build_tree, make_quadratic, minimal_value

cp = pytest.importorskip("cvxpy")


def conic_minimal_value(tree, xi, z0):
    n = tree.n_internal
    d, g, Y = cp.Variable(n), cp.Variable(n), cp.Variable(tree.n_nodes)
    Z = [None] * tree.n_nodes
    Z[0] = z0
    for i in range(n):
        for c in (2 * i + 1, 2 * i + 2):
            Z[c] = Z[i] + d[i] * tree.dt + g[i] * tree.dW[c]
    cons = [Y[tree.leaves] == xi]
    for i in range(n):
        for c in (2 * i + 1, 2 * i + 2):
            cons.append(Y[i] >= (cp.square(d[i]) + cp.square(g[i])) * tree.dt + Y[c] - Z[i] * tree.dW[c])
    prob = cp.Problem(cp.Minimize(Y[0]), cons)
    prob.solve(solver=cp.CLARABEL if "CLARABEL" in cp.installed_solvers() else None)
    return prob.value


@pytest.mark.parametrize("N", [3, 5])
def test_matches_conic_solver(N):
    t = build_tree(1.0, N)
    xi = np.abs(t.W_T)
    ref = conic_minimal_value(t, xi, 0.2)
    v = minimal_value(t, make_quadratic(), xi, 0.2)[0]
    assert abs(v - ref) <= 1e-5 * (1 + abs(ref))
