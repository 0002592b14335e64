"""Gradient-type vs maximization-type stationarity certificates.

The cubic-in-the-control problem (zero cost, zero endpoints) carries a
famous candidate: the zero control with unit costate.  Its control
gradient lies in the normal cone everywhere, so the gradient certificate
passes; but the Hamiltonian p u^3 is maximized at the edge of [-1, 1],
not at zero, so the pointwise maximization certificate fails with gap 1.
This separates the two first-order notions numerically.
"""

import numpy as np

from sampled_ocp import (Extremal, PiecewiseConstantControl, build_problem,
                         build_time_grid, hg_residual, hm_gap,
                         integrate_costate, integrate_state, lift_inequality,
                         uniform_partition)
from sampled_ocp.pmp_check import evaluate_extremal, random_admissible_control

prob = build_problem("cubic_counterexample")
part = uniform_partition(4, 1.0)
grid = build_time_grid(1.0, part, h_max=1.0 / 64.0)
u = PiecewiseConstantControl(part, np.zeros((4, 1)))
x = integrate_state(prob, u, grid)

for p0 in (-1.0, 0.0):
    kind = "normal" if p0 < 0 else "abnormal"
    p = integrate_costate(prob, x, u, p0=p0, pT=np.array([1.0]))
    e = Extremal(prob, x, u, p, p0)
    print(f"=== candidate with p0 = {p0:+.0f} ({kind}) ===")
    print(f"  gradient-condition residual: {hg_residual(e).sup:.2e}  (passes)")
    print(f"  maximization gap:            {hm_gap(e).sup:.4f}  (fails: ~1)")
    rng = np.random.default_rng(7)
    worst = max(lift_inequality(e, random_admissible_control(prob, part, rng))
                for _ in range(50))
    print(f"  worst probe value z_v(T):    {worst:.2e}  (nonpositive)")
    print()

print("=== full residual report (with the maximization section) ===")
p = integrate_costate(prob, x, u, p0=-1.0, pT=np.array([1.0]))
report = evaluate_extremal(Extremal(prob, x, u, p, -1.0), with_hm=True,
                           lift_probes=20)
print(report.to_json())
