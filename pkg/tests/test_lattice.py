import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gammabsde import (
    KernelTooLargeError,
    TreeSizeError,
    build_tree,
    conditional_expectation,
    expectation,
    girsanov_reweight,
    is_supermartingale,
    mc_paths,
)


def test_tree_sizes_and_increments():
    t = build_tree(1.0, 1)
    assert t.n_nodes == 3
    np.testing.assert_array_equal(t.dW[1:], [1.0, -1.0])

    t = build_tree(1.0, 2)
    assert t.n_nodes == 7
    np.testing.assert_allclose(np.abs(t.dW[1:]), np.sqrt(0.5))

    t = build_tree(4.0, 4)
    assert t.n_nodes == 31
    np.testing.assert_array_equal(np.abs(t.dW[1:]), 1.0)
    np.testing.assert_array_equal(t.reference.leaf_prob, 1 / 16)


def test_tree_errors():
    with pytest.raises(TreeSizeError, match=r"2\*\*"):
        build_tree(1.0, 17)
    with pytest.raises(ValueError):
        build_tree(1.0, 0)
    with pytest.raises(ValueError):
        build_tree(-1.0, 2)


def test_heap_layout():
    t = build_tree(1.0, 3)
    for i in range(t.n_internal):
        assert t.parents[2 * i + 1] == i and t.parents[2 * i + 2] == i
        np.testing.assert_allclose(t.W[2 * i + 1] - t.W[i], t.sqrt_dt)
    np.testing.assert_array_equal(t.levels[t.level(2)], 2)
    np.testing.assert_allclose(t.node_times[t.leaves], 1.0)


def test_expectation_examples():
    t = build_tree(1.0, 4)
    Q = girsanov_reweight(t, 0.5)
    assert expectation(t, np.full(t.n_leaves, 3.0), Q) == 3.0
    assert abs(expectation(t, t.W_T)) < 1e-15
    # direct leaf summation as the independent check
    assert np.isclose(np.sum(Q.leaf_prob * t.W_T), 0.5, atol=1e-14)
    assert np.isclose(expectation(t, t.W_T, Q), 0.5, atol=1e-14)
    with pytest.raises(ValueError):
        expectation(t, np.ones(5))


def test_conditional_expectation():
    t = build_tree(1.0, 3)
    for k in range(t.N):
        W_next = t.W[t.level(k + 1)]
        np.testing.assert_allclose(conditional_expectation(t, W_next), t.W[t.level(k)], atol=1e-15)
        np.testing.assert_array_equal(conditional_expectation(t, np.ones(2 ** (k + 1))), 1.0)
        Q = girsanov_reweight(t, 0.7)
        np.testing.assert_allclose(conditional_expectation(t, W_next, Q), t.W[t.level(k)] + 0.7 * t.dt, atol=1e-14)


def test_girsanov_examples():
    t = build_tree(1.0, 4)
    Q0 = girsanov_reweight(t, 0.0)
    assert Q0.is_reference
    np.testing.assert_array_equal(Q0.density, 1.0)
    Q = girsanov_reweight(t, 0.5)
    np.testing.assert_allclose(Q.p_up, 0.625)
    np.testing.assert_allclose(Q.p_down, 0.375)
    with pytest.raises(KernelTooLargeError):
        girsanov_reweight(t, 2.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.data())
def test_girsanov_normalization(N, data):
    t = build_tree(1.0, N)
    lim = 0.999 / t.sqrt_dt
    q = np.array(data.draw(st.lists(st.floats(-lim, lim), min_size=t.n_internal, max_size=t.n_internal)))
    Q = girsanov_reweight(t, q)
    np.testing.assert_array_equal(Q.p_up + Q.p_down, 1.0)
    assert np.all(Q.p_up > 0) and np.all(Q.p_down > 0)
    assert abs(expectation(t, Q.density[t.leaves]) - 1.0) < 1e-12
    assert abs(Q.leaf_prob.sum() - 1.0) < 1e-12


def test_supermartingale_examples():
    t = build_tree(1.0, 4)
    assert is_supermartingale(t, t.W).ok
    assert is_supermartingale(t, -t.node_times).ok
    rep = is_supermartingale(t, t.W, girsanov_reweight(t, 0.5))
    assert not rep.ok
    assert np.isclose(rep.worst_slack, -0.5 * t.dt)


def test_subtree_matches_restricted_measure():
    t = build_tree(1.0, 4)
    sub = t.subtree(4)
    assert sub.N == 2
    np.testing.assert_allclose(sub.dW[1:], t.dW[t.subtree_index(4)][1:])
    Q = girsanov_reweight(t, np.linspace(-0.5, 0.5, t.n_internal))
    Qs = Q.restrict(4)
    assert abs(Qs.leaf_prob.sum() - 1.0) < 1e-14


def test_mc_paths():
    p = mc_paths(1.0, 1, 1, 1, seed=3)
    assert p.dW.shape == (1, 1, 1)
    a, b = mc_paths(1.0, 4, 2, 100, seed=7), mc_paths(1.0, 4, 2, 100, seed=7)
    np.testing.assert_array_equal(a.dW, b.dW)
    with pytest.raises(ValueError):
        mc_paths(1.0, 4, 0, 10)


def test_mc_covariance_within_standard_error():
    dt = 0.25
    p = mc_paths(1.0, 4, 2, 100_000, seed=11)
    x = p.dW[:, 0, :]
    prod = x[:, :, None] * x[:, None, :]
    cov = prod.mean(axis=0)
    se = prod.std(axis=0, ddof=1) / np.sqrt(x.shape[0])
    assert np.all(np.abs(cov - dt * np.eye(2)) <= 5 * se)


def test_tree_csv(tmp_path):
    t = build_tree(1.0, 2)
    path = tmp_path / "tree.csv"
    t.to_csv(path, girsanov_reweight(t, 0.5))
    lines = path.read_text().splitlines()
    assert lines[0] == "node_id,level,parent,dW,probability"
    assert len(lines) == 8
