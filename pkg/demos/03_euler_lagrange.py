"""Closed-form inner optimizers for deterministic kernels, checked three ways."""
import numpy as np

import gammabsde as gb

q = 0.5
el = gb.el_optimizer(q, 1.0, 5)
print("t      Delta_Q  Gamma_Q")
for t, d, g in zip(el.t, el.delta, el.gamma):
    print(f"{t:.2f}  {d:.5f}  {g:.5f}")
print("min F1 =", el.min_F1, "(-1/48 =", -1 / 48, ")")
print("min F2 =", el.min_F2, "(-1/192 =", -1 / 192, ")")

cf = gb.inner_value_closed_form(q)
print(f"closed form E* = {cf:.10f}   5/192 = {5 / 192:.10f}")

# %% quadratic-program oracle on a fine grid
for n in (250, 500, 1000, 2000):
    orc = gb.qp_inner_oracle(q, N_fine=n).estar
    print(f"N_fine={n:5d}  oracle={orc:.10f}  rel err={abs(orc - cf) / cf:.2e}")

# %% the binary tree converges at first order in dt
for N in (4, 6, 8, 10, 12):
    tree = gb.build_tree(1.0, N)
    r = gb.inner_value_numeric(tree, gb.make_quadratic(), gb.Kernel.constant(q), cfg=gb.SolverConfig(restarts=1))
    print(f"N={N:2d}  tree E*={r.estar:.8f}  rel err={(r.estar - cf) / cf:+.4f}  dt={tree.dt:.4f}")
