"""Regenerate tests/data/oracle_values.json from the independent oracles.

Slow (a few minutes): every h(rho) node is a nested adaptive quadrature.
Run from the repository root: ``python3 tests/freeze_oracles.py``.
"""

import json
import math
from pathlib import Path

import numpy as np

from oracles import KT, reference_delay_oracle, serving_probability_literal

KM2 = 1e-6
SCENARIOS = {
    # name: (lam_active, load, mean_weight, tau0, P, alpha, bw, lam_op)
    "synthetic_aggregate": (6 * KM2, 60 * KM2, 1.0, 1e-6, 20.0, 4.0, 20e6, 3 * KM2),
    "synthetic_literal": (6 * KM2, 30 * KM2, 1.0, 1e-6, 20.0, 4.0, 20e6, 3 * KM2),
    "asym_op0": (4 * KM2 * 0.7 + 2 * KM2, 20 * KM2, 11.8, 2e-5, 20.0, 3.5, 20e6, 4 * KM2 * 0.7),
    "asym_op1": (4 * KM2 * 0.7 + 2 * KM2, 35 * KM2, 11.8, 2e-5, 20.0, 3.5, 10e6, 2 * KM2),
}


def main():
    out = {"noise_psd": KT, "delay": {}}
    for name, (lam, load, mw, tau0, P, alpha, bw, lam_op) in SCENARIOS.items():
        out["delay"][name] = reference_delay_oracle(lam, load, mw, tau0, P, alpha, bw, lam_op=lam_op)
        print(name, out["delay"][name], flush=True)
    out["serving_c03"] = serving_probability_literal([2e-6, 1e-6], 0.3).tolist()
    path = Path(__file__).parent / "data" / "oracle_values.json"
    path.write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
