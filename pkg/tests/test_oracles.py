import numpy as np
import pytest

from gammabsde import (
    GridSpec,
    GridTooLargeError,
    brute_force_minimal,
    build_tree,
    inner_value_closed_form,
    make_quadratic,
    qp_inner_oracle,
)

Q = make_quadratic()


def test_brute_force_trivial():
    t = build_tree(1.0, 2)
    gs = GridSpec.pitch(0.25)
    assert brute_force_minimal(t, Q, np.full(4, 2.0), 0.0, gs) == 2.0
    assert abs(brute_force_minimal(t, Q, t.W_T, 1.0, gs)) < 1e-15


def test_brute_force_N2_reference():
    t = build_tree(1.0, 2)
    bf = brute_force_minimal(t, Q, np.abs(t.W_T), 0.0, GridSpec.pitch(0.05))
    assert abs(bf - (np.sqrt(2) - 0.125)) < 1e-2


def test_brute_force_caps():
    t = build_tree(1.0, 2)
    with pytest.raises(GridTooLargeError):
        brute_force_minimal(t, Q, np.abs(t.W_T), 0.0, GridSpec.pitch(0.05, cap=10**6))
    with pytest.raises(ValueError):
        brute_force_minimal(build_tree(1.0, 3), Q, np.zeros(8))


def test_qp_oracle_zero_kernel():
    r = qp_inner_oracle(0.0, N_fine=100)
    assert r.min_F1 == 0.0 and r.min_F2 == 0.0
    np.testing.assert_array_equal(r.delta, 0.0)


def test_qp_oracle_constant_kernel():
    r = qp_inner_oracle(0.5, N_fine=2000)
    assert abs(r.min_F1 + 1 / 48) < 1e-7
    assert abs(r.min_F2 + 1 / 192) < 1e-7
    # argmin is half the tail integral at cell midpoints
    np.testing.assert_allclose(r.delta, 0.25 * (1 - r.t_mid), atol=1e-3)


def test_qp_oracle_second_order_convergence():
    cf = 5 / 192
    e1 = abs(qp_inner_oracle(0.5, N_fine=500).estar - cf)
    e2 = abs(qp_inner_oracle(0.5, N_fine=1000).estar - cf)
    assert 3.5 < e1 / e2 < 4.5


def test_qp_oracle_two_piece_richardson():
    q = [0.8, -0.3]
    a = qp_inner_oracle(q, N_fine=2000).estar
    b = qp_inner_oracle(q, N_fine=4000).estar
    rich = (4 * b - a) / 3
    assert abs(rich - inner_value_closed_form(q)) / inner_value_closed_form(q) < 1e-6
    assert abs(b - inner_value_closed_form(q)) / inner_value_closed_form(q) < 1e-6


def test_qp_oracle_size_cap():
    with pytest.raises(ValueError):
        qp_inner_oracle(0.5, N_fine=10**5 + 1)


def test_brute_force_z_dependent_generator():
    from gammabsde import make_polynomial, minimal_value

    t = build_tree(1.0, 2)
    g = make_polynomial(a_delta=1.0, a_gamma=1.0, a_z=0.5)
    xi = np.abs(t.W_T)
    bf = brute_force_minimal(t, g, xi, 0.3, GridSpec.pitch(0.1))
    v = minimal_value(t, g, xi, 0.3)[0]
    assert v <= bf + 1e-9 and bf - v <= 1e-2
