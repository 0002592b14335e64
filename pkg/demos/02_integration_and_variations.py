"""Deterministic propagation: state, costate, variations, transition matrix.

Shows the fixed-step integrators on a double integrator, the fourth-order
endpoint accuracy, the backward adjoint solve, and the agreement of the
linearized response with a finite-difference probe and with the
transition-matrix integral.
"""

import numpy as np

from sampled_ocp import (PiecewiseConstantControl, build_problem,
                         build_time_grid, integrate_costate, integrate_state,
                         integrate_variation, transition_matrix,
                         uniform_partition)
from sampled_ocp.integrate import simpson_on_interval

prob = build_problem("affine_quadratic")
part = uniform_partition(4, 1.0)
grid = build_time_grid(1.0, part, h_max=1.0 / 128.0)
rng = np.random.default_rng(1)
u = PiecewiseConstantControl(part, rng.uniform(-1, 1, (4, 1)))

print("=== Forward state + running cost ===")
traj = integrate_state(prob, u, grid)
print("x(T) =", np.round(traj.final_state, 8), "  cost =", round(traj.cost, 8))

print()
print("=== Fourth-order endpoint convergence ===")
fine = integrate_state(prob, u, build_time_grid(1.0, part, 1.0 / 1024))
prev = None
for div in (16, 32, 64):
    t = integrate_state(prob, u, build_time_grid(1.0, part, 1.0 / div))
    err = np.linalg.norm(t.final_state - fine.final_state)
    note = f"  ratio {prev / err:5.1f}" if prev else ""
    print(f"h = 1/{div:3d}: endpoint error {err:.3e}{note}")
    prev = err

print()
print("=== Backward costate solve ===")
p = integrate_costate(prob, traj, u, p0=-1.0, pT=np.array([1.0, -0.5]))
print("p(0) =", np.round(p.costates[0], 8))

print()
print("=== Linearized response vs finite differences ===")
v = PiecewiseConstantControl(part, rng.uniform(-1, 1, (4, 1)))
var = integrate_variation(prob, traj, u, v)
for eps in (1e-3, 5e-4):
    pert = integrate_state(
        prob, PiecewiseConstantControl(part, u.values + eps * v.values), grid)
    err = np.max(np.abs(pert.states - traj.states - eps * var.w))
    print(f"eps = {eps:g}: |x(u+eps v) - x(u) - eps w|_sup = {err:.3e}")

print()
print("=== Transition-matrix route to the same response ===")
finals = transition_matrix(prob, traj, u).at_final()
integral = np.zeros(prob.n)
for i in range(part.N):
    sl = grid.interval_slice(i)
    vals = np.empty((sl.stop - sl.start, prob.n))
    for j, k in enumerate(range(sl.start, sl.stop)):
        ju = prob.dynamics_jac_u(traj.states[k], u.values[i],
                                 float(grid.times[k]))
        vals[j] = finals[k] @ (ju @ v.values[i])
    h = float(grid.times[sl.start + 1] - grid.times[sl.start])
    integral += simpson_on_interval(vals, h)
print("w(T) from variation equations:  ", np.round(var.final_w, 10))
print("w(T) from transition integral:  ", np.round(integral, 10))
print("difference:", np.linalg.norm(var.final_w - integral))
