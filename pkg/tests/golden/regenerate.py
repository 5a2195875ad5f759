"""Recompute tests/golden/values.json from the oracles (not from the solvers)."""
import json
from pathlib import Path

import numpy as np

import gammabsde as gb


def main():
    t = gb.build_tree(1.0, 2)
    bf = gb.brute_force_minimal(t, gb.make_quadratic(), np.abs(t.W_T), 0.0, gb.GridSpec.pitch(0.05))
    q1 = gb.qp_inner_oracle(0.5, 1.0, 0.0, 2000)
    q2 = gb.qp_inner_oracle([0.8, -0.3], 1.0, 0.0, 2000)
    data = {
        "brute_force_abs_N2": {
            "value": bf,
            "provenance": "brute_force_minimal, T=1, N=2, xi=|W_T|, z0=0, quadratic, grid pitch 0.05 on [-2,2]^2 per node",
        },
        "qp_oracle_q0.5": {
            "min_F1": q1.min_F1, "min_F2": q1.min_F2, "estar": q1.estar,
            "provenance": "qp_inner_oracle(q=0.5, T=1, z0=0, N_fine=2000)",
        },
        "qp_oracle_q0.8_-0.3": {
            "estar": q2.estar,
            "provenance": "qp_inner_oracle(q=(0.8,-0.3) on [0,0.5),[0.5,1], T=1, z0=0, N_fine=2000)",
        },
    }
    out = Path(__file__).with_name("values.json")
    out.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
