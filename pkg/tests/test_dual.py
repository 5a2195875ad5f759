import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gammabsde import (
    DualReport,
    Kernel,
    SolverConfig,
    build_tree,
    dual_bound,
    el_optimizer,
    expectation,
    girsanov_reweight,
    inner_value_closed_form,
    inner_value_numeric,
    make_gamma_band,
    make_polynomial,
    make_quadratic,
    maximize_over_q,
    minimal_value,
    probe_conjugate,
    reconstruct_solution,
)

Q = make_quadratic()


def discrete_estar(tree, q_levels, z0=0.0):
    """Exact tree optimum of the inner problem for a level-deterministic kernel."""
    q = np.asarray(q_levels, float)
    dt = tree.dt
    R_next = np.array([q[j + 1:].sum() * dt for j in range(tree.N)])
    return 0.25 * np.sum(R_next**2 * dt * (1 + q**2)) + z0 * q.sum() * dt


def test_kernel_basics():
    k = Kernel((0.8, -0.3), 1.0)
    assert k.K == 2
    np.testing.assert_allclose(k(np.array([0.1, 0.6])), [0.8, -0.3])
    assert np.isclose(k.integral(), 0.25)
    assert np.isclose(k.tail(0.0), 0.25) and np.isclose(k.tail(1.0), 0.0)
    t = build_tree(1.0, 4)
    np.testing.assert_allclose(k.on_tree(t), np.repeat([0.8, 0.8, -0.3, -0.3], [1, 2, 4, 8]))


def test_zero_kernel_gives_zero():
    t = build_tree(1.0, 4)
    for z0 in (0.0, 1.7):
        r = inner_value_numeric(t, Q, Kernel.constant(0.0), z0)
        assert r.estar == 0.0
        np.testing.assert_array_equal(r.ct.delta, 0.0)
        np.testing.assert_array_equal(r.ct.gamma, 0.0)


@pytest.mark.parametrize("N", [2, 4, 6, 8])
def test_inner_matches_exact_discrete_value(N):
    t = build_tree(1.0, N)
    r = inner_value_numeric(t, Q, Kernel.constant(0.5))
    assert abs(r.estar - discrete_estar(t, [0.5] * N)) < 1e-9


def test_inner_z0_shift():
    t = build_tree(1.0, 4)
    base = inner_value_numeric(t, Q, Kernel.constant(0.5), 0.0).estar
    shifted = inner_value_numeric(t, Q, Kernel.constant(0.5), 1.0).estar
    assert abs(shifted - base - 0.5) < 1e-9


def test_inner_tree_converges_to_closed_form():
    cf = inner_value_closed_form(0.5)
    errs = []
    for N in (4, 8, 12):
        t = build_tree(1.0, N)
        r = inner_value_numeric(t, Q, Kernel.constant(0.5), cfg=SolverConfig(restarts=1))
        errs.append(abs(r.estar - cf) / cf)
        assert errs[-1] <= 1.5 * t.dt
    assert errs[0] > errs[1] > errs[2]


def test_inner_gamma_band_respects_band():
    t = build_tree(1.0, 4)
    band = make_gamma_band(Q, 0.05)
    r = inner_value_numeric(t, band, Kernel((1.5, -1.0), 1.0))
    assert np.max(np.abs(r.ct.gamma)) <= 0.05 + 1e-12


def test_el_optimizer_examples():
    el = el_optimizer(0.0)
    np.testing.assert_array_equal(el.delta, 0.0)
    np.testing.assert_array_equal(el.gamma, 0.0)
    el = el_optimizer(0.5, 1.0, 101)
    assert np.isclose(el.delta[0], 0.25) and np.isclose(el.gamma[0], 0.125)
    np.testing.assert_allclose(np.diff(el.delta) / np.diff(el.t), -0.25)
    assert np.isclose(el.min_F1, -1 / 48, rtol=1e-8)
    assert np.isclose(el.min_F2, -1 / 192, rtol=1e-8)
    assert np.isclose(el.delta[-1], 0.0) and np.isclose(el.gamma[-1], 0.0)


def test_closed_form_examples():
    assert inner_value_closed_form(0.0, z0=3.0) == 0.0
    assert np.isclose(inner_value_closed_form(0.5), 5 / 192, rtol=1e-8)
    assert np.isclose(inner_value_closed_form(0.5, z0=1.0), 5 / 192 + 0.5, rtol=1e-8)


def test_closed_form_rejects_bad_inputs():
    with pytest.raises(ValueError):
        inner_value_closed_form(0.5, gen=make_quadratic(2))
    with pytest.raises(ValueError):
        inner_value_closed_form(0.5, gen=make_polynomial(c0=1.0))
    t = build_tree(1.0, 3)
    with pytest.raises(ValueError):
        dual_bound(t, Q, t.W_T, 0.0, np.linspace(-0.2, 0.2, t.n_internal), method="closed_form")


def test_dual_bound_trivial_cases():
    t = build_tree(1.0, 4)
    rep = dual_bound(t, Q, np.full(t.n_leaves, 2.5), 0.0, Kernel.constant(0.0), primal_value=2.5)
    assert abs(rep.bound - 2.5) < 1e-12 and abs(rep.gap) < 1e-12
    rep = dual_bound(t, Q, t.W_T, 1.0, Kernel.constant(0.0), primal_value=0.0)
    assert abs(rep.bound) < 1e-12


def test_dual_report_json_fields():
    t = build_tree(1.0, 3)
    rep = dual_bound(t, Q, np.abs(t.W_T), 0.0, Kernel((0.4, -0.2), 1.0), primal_value=1.0)
    d = json.loads(rep.to_json())
    assert list(d) == list(DualReport.FIELDS)
    assert d["kernel"]["values"] == [0.4, -0.2]


@settings(max_examples=12, deadline=None)
@given(st.lists(st.floats(-1.0, 1.0), min_size=1, max_size=4), st.floats(-1, 1))
def test_weak_duality_random_kernels(vals, z0):
    t = build_tree(1.0, 4)
    xi = np.abs(t.W_T)
    primal = minimal_value(t, Q, xi, z0, SolverConfig(restarts=1))[0]
    rep = dual_bound(t, Q, xi, z0, Kernel(vals, 1.0), primal_value=primal, cfg=SolverConfig(restarts=1))
    assert rep.gap >= -1e-6


def test_ascent_is_monotone_and_below_primal():
    t = build_tree(1.0, 6)
    xi = np.abs(t.W_T)
    primal = minimal_value(t, Q, xi)[0]
    res = maximize_over_q(t, Q, xi, 0.0, K=2, q_max=1.0, sweeps=1, primal_value=primal)
    assert np.all(np.diff(res.history) >= 0)
    assert res.report.bound <= primal + 1e-6
    assert res.report.bound >= expectation(t, xi) - 1e-12


def test_ascent_constant_payoff_stays_at_zero_kernel():
    t = build_tree(1.0, 4)
    res = maximize_over_q(t, Q, np.full(t.n_leaves, 3.0), 0.0, K=2, q_max=1.0, sweeps=1)
    assert abs(res.report.bound - 3.0) < 1e-12
    np.testing.assert_array_equal(res.kernel.values, 0.0)


def test_reconstruction_tight_cases():
    t = build_tree(1.0, 4)
    for xi, z0, v in ((np.full(t.n_leaves, 3.0), 0.0, 3.0), (t.W_T, 1.0, 0.0)):
        sol, rep = reconstruct_solution(t, Q, xi, z0, Kernel.constant(0.0), v)
        assert rep.defect <= 1e-6 and rep.certified
        assert np.max(np.abs(sol.A)) <= 1e-9


def test_reconstruction_certified_with_witness():
    t = build_tree(1.0, 4)
    xi = np.abs(t.W_T)
    primal, sol = minimal_value(t, Q, xi)
    res = maximize_over_q(t, Q, xi, 0.0, K=2, q_max=1.0, sweeps=1, primal_value=primal)
    _, rep = reconstruct_solution(t, Q, xi, 0.0, res.kernel, primal, witness=sol)
    assert rep.certified
    assert rep.witness_defect <= rep.certified_bound + 1e-6


def test_probe_conjugate():
    t = build_tree(1.0, 3)
    cfg = SolverConfig(restarts=1)
    rows = probe_conjugate(t, Q, np.full(t.n_leaves, 1.2), 6, cfg=cfg)
    assert rows[0][1] == "mass_above_one"
    bounds = np.array([r[4] for r in rows])
    np.testing.assert_allclose(np.diff(bounds), 0.2, atol=1e-6)
    rows = probe_conjugate(t, Q, np.full(t.n_leaves, 0.8), 6, cfg=cfg)
    assert rows[0][1] == "mass_below_one"
    assert rows[-1][4] - rows[0][4] >= 0.19 * 6
    rows = probe_conjugate(t, Q, np.ones(t.n_leaves), 6, cfg=cfg)
    assert max(abs(r[4]) for r in rows) < 1e-6
