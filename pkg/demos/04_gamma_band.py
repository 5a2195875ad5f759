"""Bounding the diffusion part of the control raises the value."""
import numpy as np

import gammabsde as gb

tree = gb.build_tree(1.0, 5)
xi = np.abs(tree.W_T)
Q = gb.make_quadratic()
free, sol = gb.minimal_value(tree, Q, xi)
print(f"unconstrained value {free:.6f}, max |Gamma| = {np.max(np.abs(sol.ct.gamma)):.4f}")

for M in (1.0, 0.5, 0.25, 0.1, 0.0):
    v, sol = gb.minimal_value(tree, gb.make_gamma_band(Q, M), xi)
    print(f"M={M:4.2f}  value={v:.6f}  max |Gamma|={np.max(np.abs(sol.ct.gamma)):.4f}")

# %% a box on Z itself (short-selling limit)
box = gb.make_shortsell_box(Q, -0.3, 0.3)
v, sol = gb.minimal_value(tree, box, tree.W_T)
print(f"xi = W_T with |Z| <= 0.3: value {v:.6f}")
