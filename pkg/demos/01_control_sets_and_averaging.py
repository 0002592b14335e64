"""Control sets, projections, and the interval-averaging operator.

Walks through the convex control-set machinery (closed-form projections,
normal-cone membership tests) and the averaging projection of an
arbitrary control onto a partition, including the exactly-known L1
distance for the unit ramp.
"""

import numpy as np

from sampled_ocp import (Ball, Box, SampledControlSignal, average_onto,
                         l1_distance, normal_cone_residual, project,
                         uniform_partition)

print("=== Projections onto convex control sets ===")
box = Box([-1.0], [1.0])
ball = Ball([0.0, 0.0], 1.0)
print("project([-1,1], 2.0)        ->", project(box, np.array([2.0])))
print("project([-1,1], 0.5)        ->", project(box, np.array([0.5])))
print("project(unit ball, (3,4))   ->", project(ball, np.array([3.0, 4.0])))

print()
print("=== Normal-cone membership via projection ===")
# at the boundary point u = 1 the outward direction is normal
print("residual at u=1, g=5:       ", normal_cone_residual(box, [1.0], [5.0]))
# in the interior the cone is {0}; any nonzero g leaves a residual
print("residual at u=0, g=0.3:     ", normal_cone_residual(box, [0.0], [0.3]))

print()
print("=== Averaging a signal onto partitions ===")
ts = np.linspace(0.0, 1.0, 201)
ramp = SampledControlSignal(ts, ts[:, None], "piecewise_linear")
for N in (1, 2, 4, 8):
    part = uniform_partition(N, 1.0)
    avg = average_onto(ramp, part)
    dist = l1_distance(ramp, avg)
    print(f"N={N}: values {np.round(avg.values.ravel(), 4)}, "
          f"L1 distance {dist:.6f} (exact 1/(4N) = {1.0 / (4 * N):.6f})")

print()
print("=== Membership preservation ===")
rng = np.random.default_rng(0)
sig_ts = np.sort(np.concatenate([[0.0, 1.0], rng.uniform(0, 1, 5)]))
vals = np.array([project(box, rng.normal(scale=3, size=1)) for _ in sig_ts])
sig = SampledControlSignal(sig_ts, vals, "piecewise_linear")
avg = average_onto(sig, uniform_partition(3, 1.0))
print("signal valued in [-1,1]; averaged values:", np.round(avg.values.ravel(), 4))
print("all inside the set:", bool(np.all(np.abs(avg.values) <= 1.0)))
