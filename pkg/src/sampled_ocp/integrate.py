"""Deterministic ODE propagation on partition-aligned time grids.

Classical fixed-step RK4 for the state (with the running cost carried as
an augmented quadrature state), the backward adjoint equation, the
linearized variation equations, and the state-transition matrix.  Grids
contain every sampling time bit-exactly and stages never straddle a
sampling time, so piecewise-constant controls stay piecewise smooth
across steps and results are bitwise reproducible for a fixed grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .control_partition import (Partition, PiecewiseConstantControl,
                                SampledControlSignal)
from .errors import (GridAlignmentError, IntegrationDivergedError,
                     TrivialLiftError)
from .problem_model import OcpProblem

Array = np.ndarray

# Grid default: h <= T / 1024 unless the caller asks otherwise.
DEFAULT_STEP_DIVISOR = 1024
BLOWUP_NORM = 1e12


def _frozen(a) -> Array:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing solver nodes containing 0, T and all sampling
    times of the attached partition (bit-equal).  Steps are uniform
    within each partition interval and every interval holds an even
    number of them, so composite Simpson applies directly."""

    times: Array
    boundaries: Array  # indices into times of the partition nodes
    partition: Optional[Partition]

    @property
    def K(self) -> int:
        """Number of steps (segments)."""
        return self.times.size - 1

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def n_intervals(self) -> int:
        return self.boundaries.size - 1

    def segment_owners(self) -> Array:
        """Partition-interval index owning each grid segment."""
        owners = np.empty(self.K, dtype=int)
        for i in range(self.n_intervals):
            owners[self.boundaries[i]:self.boundaries[i + 1]] = i
        return owners

    def interval_slice(self, i: int) -> slice:
        """Node index range [lo, hi] covering partition interval i."""
        return slice(int(self.boundaries[i]), int(self.boundaries[i + 1]) + 1)

    def locate(self, t: float) -> int:
        """Segment index whose [t_k, t_{k+1}] contains t."""
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        return min(max(k, 0), self.K - 1)


def build_time_grid(horizon: float, partition: Optional[Partition] = None,
                    h_max: Optional[float] = None) -> TimeGrid:
    """Partition-aligned grid with even, uniform steps per interval."""
    horizon = float(horizon)
    if h_max is None:
        h_max = horizon / DEFAULT_STEP_DIVISOR
    if h_max <= 0:
        raise ValueError("h_max must be positive")
    anchors = partition.times if partition is not None else np.array([0.0, horizon])
    if partition is not None and anchors[-1] != horizon:
        raise GridAlignmentError("partition horizon differs from problem horizon")
    pieces = []
    boundaries = [0]
    for i in range(anchors.size - 1):
        a, b = anchors[i], anchors[i + 1]
        steps = int(np.ceil((b - a) / h_max))
        steps = max(2, steps + (steps % 2))
        nodes = np.linspace(a, b, steps + 1)
        pieces.append(nodes if i == 0 else nodes[1:])
        boundaries.append(boundaries[-1] + steps)
    times = np.concatenate(pieces)
    return TimeGrid(_frozen(times), _frozen(np.asarray(boundaries)).astype(int),
                    partition)


def _require_aligned(grid: TimeGrid, partition: Partition) -> None:
    if not np.all(np.isin(partition.times, grid.times)):
        raise GridAlignmentError("grid does not contain all sampling times")


class ControlDifference:
    """Pointwise difference a(t) - b(t) of two control-like objects.

    Used as a variation direction; each piecewise-constant part keeps
    the segment-ownership evaluation rule (so samples at a segment's
    right endpoint stay on the segment's side of a control jump).
    """

    def __init__(self, a, b):
        self.a = a
        self.b = b


def _control_values_per_segment(u, grid: TimeGrid):
    """Resolve the control for RK4 stages.

    Piecewise-constant controls are frozen per segment at the value of
    the interval owning the segment's left endpoint (stages never cross
    a sampling time on aligned grids).  Signals and callables are
    evaluated at stage times.
    """
    if isinstance(u, PiecewiseConstantControl):
        _require_aligned(grid, u.partition)
        lefts = grid.times[:-1]
        idx = np.clip(np.searchsorted(u.partition.times, lefts, side="right") - 1,
                      0, u.partition.N - 1)
        per_seg = u.values[idx]
        return lambda k, t: per_seg[k]
    if isinstance(u, ControlDifference):
        va = _control_values_per_segment(u.a, grid)
        vb = _control_values_per_segment(u.b, grid)
        return lambda k, t: va(k, t) - vb(k, t)
    if isinstance(u, SampledControlSignal):
        return lambda k, t: u.value(t)
    if callable(u):
        return lambda k, t: np.atleast_1d(np.asarray(u(t), dtype=float))
    raise TypeError(f"unsupported control of type {type(u)!r}")


def _hermite(y0, d0, y1, d1, h, s):
    """Cubic Hermite on [0, 1] with endpoint values and derivatives."""
    s2 = s * s
    s3 = s2 * s
    return ((2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * h * d0
            + (-2 * s3 + 3 * s2) * y1 + (s3 - s2) * h * d1)


class _DensePiece:
    """Shared dense-output logic over one grid."""

    def __init__(self, grid: TimeGrid, values: Array, deriv_right: Array,
                 deriv_left: Array):
        self.grid = grid
        self._values = values
        self._dr = deriv_right
        self._dl = deriv_left

    def at(self, t: float) -> Array:
        k = self.grid.locate(t)
        t0, t1 = self.grid.times[k], self.grid.times[k + 1]
        if t == t0:
            return self._values[k]
        if t == t1:
            return self._values[k + 1]
        h = t1 - t0
        return _hermite(self._values[k], self._dr[k], self._values[k + 1],
                        self._dl[k + 1], h, (t - t0) / h)

    def sample(self, ts) -> Array:
        return np.array([self.at(float(t)) for t in np.atleast_1d(ts)])


@dataclass(frozen=True)
class Trajectory:
    """State path on a grid with cubic-Hermite dense output.

    `deriv_right[k]` is the stored derivative at the left node of
    segment k (evaluated with that segment's control); `deriv_left[k+1]`
    at its right node.  They differ only across sampling times.
    """

    grid: TimeGrid
    states: Array        # (K+1, n)
    deriv_right: Array   # (K, n)
    deriv_left: Array    # (K+1, n); index 0 unused
    running_cost: Array  # (K+1,)

    @property
    def cost(self) -> float:
        return float(self.running_cost[-1])

    @property
    def final_state(self) -> Array:
        return self.states[-1]

    def at(self, t: float) -> Array:
        return _DensePiece(self.grid, self.states, self.deriv_right,
                           self.deriv_left).at(float(t))

    def sample(self, ts) -> Array:
        piece = _DensePiece(self.grid, self.states, self.deriv_right, self.deriv_left)
        return piece.sample(ts)


@dataclass(frozen=True)
class CostateTrajectory:
    """Adjoint path p on a grid, plus the abnormality scalar p0 <= 0."""

    grid: TimeGrid
    costates: Array
    p0: float
    deriv_right: Array
    deriv_left: Array

    def __post_init__(self):
        if self.p0 > 0:
            raise ValueError("p0 must be nonpositive")
        if float(np.linalg.norm(self.costates[-1])) + abs(self.p0) == 0.0:
            raise TrivialLiftError("p(T) = 0 with p0 = 0 is not a valid lift")

    @property
    def final_costate(self) -> Array:
        return self.costates[-1]

    def at(self, t: float) -> Array:
        return _DensePiece(self.grid, self.costates, self.deriv_right,
                           self.deriv_left).at(float(t))

    def sample(self, ts) -> Array:
        piece = _DensePiece(self.grid, self.costates, self.deriv_right,
                            self.deriv_left)
        return piece.sample(ts)

    def scaled(self, lam: float) -> "CostateTrajectory":
        """Positive rescaling of the whole pair (p, p0)."""
        if lam <= 0:
            raise ValueError("scaling must be positive")
        return CostateTrajectory(self.grid, self.costates * lam, self.p0 * lam,
                                 self.deriv_right * lam, self.deriv_left * lam)


def _rk4_march(rhs, grid: TimeGrid, y0: Array, forward: bool, what: str):
    """March RK4 over all segments; stores endpoint derivatives.

    rhs(k, t, y, stage) evaluates the vector field on segment k; `stage`
    is 0 at the step's starting node, 1 at the midpoint, 2 at the
    arrival node, letting callers serve precomputed stage data instead
    of interpolating.  Backward marching runs the same formulas from the
    terminal node with negative steps.
    """
    K = grid.K
    dim = y0.size
    ys = np.empty((K + 1, dim))
    d_right = np.zeros((K, dim))
    d_left = np.zeros((K + 1, dim))
    order = range(K) if forward else range(K - 1, -1, -1)
    ys[0 if forward else K] = y0
    for k in order:
        ta, tb = grid.times[k], grid.times[k + 1]
        if forward:
            t0, t1, y = ta, tb, ys[k]
        else:
            t0, t1, y = tb, ta, ys[k + 1]
        h = t1 - t0
        tm = t0 + 0.5 * h
        k1 = rhs(k, t0, y, 0)
        k2 = rhs(k, tm, y + 0.5 * h * k1, 1)
        k3 = rhs(k, tm, y + 0.5 * h * k2, 1)
        k4 = rhs(k, t1, y + h * k3, 2)
        ynew = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        # single reduction; NaN fails the comparison and is caught too
        if not np.abs(ynew).max() <= BLOWUP_NORM:
            raise IntegrationDivergedError(
                f"{what} blew up at t = {t1:.6g}", t_bad=float(t1))
        kend = rhs(k, t1, ynew, 2)
        if forward:
            ys[k + 1] = ynew
            d_right[k] = k1
            d_left[k + 1] = kend
        else:
            ys[k] = ynew
            d_left[k + 1] = k1
            d_right[k] = kend
    return ys, d_right, d_left


def _segment_midpoints(values: Array, d_right: Array, d_left: Array,
                       times: Array) -> Array:
    """Hermite values at all segment midpoints, vectorized."""
    h = (times[1:] - times[:-1])[:, None]
    return (0.5 * (values[:-1] + values[1:])
            + 0.125 * h * (d_right - d_left[1:]))


def _stage_tables(x: "Trajectory", grid: TimeGrid):
    """Node and midpoint state values aligned with `grid`."""
    if x.grid.times is grid.times or np.array_equal(x.grid.times, grid.times):
        nodes = x.states
        mids = _segment_midpoints(x.states, x.deriv_right, x.deriv_left,
                                  grid.times)
    else:
        nodes = x.sample(grid.times)
        mids = x.sample(0.5 * (grid.times[:-1] + grid.times[1:]))
    return nodes, mids


def integrate_state(prob: OcpProblem, u, grid: TimeGrid) -> Trajectory:
    """Forward solve of xdot = f(x, u(t), t), x(0) = x0, plus running cost.

    The running cost integral rides along as one extra RK4 state, so the
    returned `cost` carries the same fourth-order accuracy as the state.
    """
    uval = _control_values_per_segment(u, grid)
    n = prob.n

    def rhs(k, t, y, stage):
        x = y[:n]
        uu = uval(k, t)
        out = np.empty(n + 1)
        out[:n] = prob.dynamics(x, uu, t)
        out[n] = prob.cost(x, uu, t)
        return out

    y0 = np.concatenate([prob.x0, [0.0]])
    ys, dr, dl = _rk4_march(rhs, grid, y0, forward=True, what="state integration")
    return Trajectory(grid, _frozen(ys[:, :n]), _frozen(dr[:, :n]),
                      _frozen(dl[:, :n]), _frozen(ys[:, n]))


def integrate_costate(prob: OcpProblem, x: Trajectory, u, p0: float,
                      pT: Array, grid: Optional[TimeGrid] = None) -> CostateTrajectory:
    """Backward solve of pdot = -grad_x f' p - p0 grad_x L, p(T) = pT."""
    grid = grid if grid is not None else x.grid
    pT = np.atleast_1d(np.asarray(pT, dtype=float))
    p0 = float(p0)
    if p0 > 0:
        raise ValueError("p0 must be nonpositive")
    if float(np.linalg.norm(pT)) + abs(p0) == 0.0:
        raise TrivialLiftError("refusing the trivial pair pT = 0, p0 = 0")
    uval = _control_values_per_segment(u, grid)
    x_nodes, x_mid = _stage_tables(x, grid)

    def rhs(k, t, p, stage):
        # backward step inside segment k: stage 0 sits at node k+1,
        # stage 2 at node k, stage 1 at the stored Hermite midpoint
        if stage == 0:
            xt = x_nodes[k + 1]
        elif stage == 2:
            xt = x_nodes[k]
        else:
            xt = x_mid[k]
        uu = uval(k, t)
        return (-prob.dynamics_jac_x(xt, uu, t).T @ p
                - p0 * prob.cost_grad_x(xt, uu, t))

    ps, dr, dl = _rk4_march(rhs, grid, pT, forward=False,
                            what="costate integration")
    return CostateTrajectory(grid, _frozen(ps), p0, _frozen(dr), _frozen(dl))


@dataclass(frozen=True)
class VariationResult:
    """Linearized state/cost response (w, w0) to a control direction."""

    grid: TimeGrid
    w: Array    # (K+1, n)
    w0: Array   # (K+1,)

    @property
    def final_w(self) -> Array:
        return self.w[-1]

    @property
    def final_w0(self) -> float:
        return float(self.w0[-1])


def integrate_variation(prob: OcpProblem, x: Trajectory, u, direction,
                        grid: Optional[TimeGrid] = None) -> VariationResult:
    """Forward solve of the coupled linear variation equations.

    wdot  = grad_x f w + grad_u f v,          w(0) = 0
    w0dot = <grad_x L, w> + <grad_u L, v>,    w0(0) = 0

    `direction` is the control perturbation v, given as a control-like
    object or callable.
    """
    grid = grid if grid is not None else x.grid
    uval = _control_values_per_segment(u, grid)
    vval = _control_values_per_segment(direction, grid)
    n = prob.n
    x_nodes, x_mid = _stage_tables(x, grid)

    def rhs(k, t, y, stage):
        w = y[:n]
        if stage == 0:
            xt = x_nodes[k]
        elif stage == 2:
            xt = x_nodes[k + 1]
        else:
            xt = x_mid[k]
        uu = uval(k, t)
        vv = vval(k, t)
        out = np.empty(n + 1)
        out[:n] = prob.dynamics_jac_x(xt, uu, t) @ w + prob.dynamics_jac_u(xt, uu, t) @ vv
        out[n] = prob.cost_grad_x(xt, uu, t) @ w + prob.cost_grad_u(xt, uu, t) @ vv
        return out

    y0 = np.zeros(n + 1)
    ys, _, _ = _rk4_march(rhs, grid, y0, forward=True, what="variation integration")
    return VariationResult(grid, _frozen(ys[:, :n]), _frozen(ys[:, n]))


class TransitionMap:
    """State-transition matrix of the linearization along (x, u).

    `at_final()` returns Phi(T, t_k) for every grid node from a single
    backward sweep of d/ds Phi(T, s) = -Phi(T, s) A(s).  Calling the
    object evaluates Phi(t, s) for arbitrary node pairs by integrating
    the homogeneous variational equation from identity at s.
    """

    def __init__(self, prob: OcpProblem, x: Trajectory, u,
                 grid: Optional[TimeGrid] = None):
        self.prob = prob
        self.x = x
        self.grid = grid if grid is not None else x.grid
        self._uval = _control_values_per_segment(u, self.grid)
        self._final: Optional[Array] = None

    def _jac(self, k, t):
        return self.prob.dynamics_jac_x(self.x.at(t), self._uval(k, t), t)

    def at_final(self) -> Array:
        """(K+1, n, n) array of Phi(T, t_k) on the grid nodes."""
        if self._final is None:
            n = self.prob.n
            x_nodes, x_mid = _stage_tables(self.x, self.grid)

            def rhs(k, t, m_flat, stage):
                if stage == 0:
                    xt = x_nodes[k + 1]
                elif stage == 2:
                    xt = x_nodes[k]
                else:
                    xt = x_mid[k]
                A = self.prob.dynamics_jac_x(xt, self._uval(k, t), t)
                M = m_flat.reshape(n, n)
                return (-M @ A).ravel()

            ms, _, _ = _rk4_march(rhs, self.grid, np.eye(n).ravel(),
                                  forward=False, what="transition matrix")
            self._final = ms.reshape(-1, n, n)
        return self._final

    def __call__(self, t: float, s: float) -> Array:
        n = self.prob.n
        if t == s:
            return np.eye(n)
        lo, hi = (s, t) if t > s else (t, s)
        klo, khi = self.grid.locate(lo), self.grid.locate(hi)
        nodes = [lo] + [float(tt) for tt in self.grid.times[klo + 1:khi + 1]
                        if lo < tt < hi] + [hi]
        Phi = np.eye(n)
        seq = zip(nodes[:-1], nodes[1:]) if t > s else \
            zip(reversed(nodes[1:]), reversed(nodes[:-1]))
        for a, b in seq:
            k = self.grid.locate(min(a, b))
            h = b - a
            M1 = self._jac(k, a) @ Phi
            M2 = self._jac(k, a + 0.5 * h) @ (Phi + 0.5 * h * M1)
            M3 = self._jac(k, a + 0.5 * h) @ (Phi + 0.5 * h * M2)
            M4 = self._jac(k, b) @ (Phi + h * M3)
            Phi = Phi + (h / 6.0) * (M1 + 2 * M2 + 2 * M3 + M4)
        return Phi


def transition_matrix(prob: OcpProblem, x: Trajectory, u,
                      grid: Optional[TimeGrid] = None) -> TransitionMap:
    return TransitionMap(prob, x, u, grid)


# ---------------------------------------------------------------------------
# Quadrature on aligned grids


def simpson_on_interval(values: Array, h: float) -> Array:
    """Composite Simpson over one uniform block (even segment count)."""
    K = values.shape[0] - 1
    if K % 2 != 0 or K < 2:
        raise ValueError("Simpson needs an even, positive segment count")
    w = np.ones(K + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return (h / 3.0) * np.tensordot(w, values, axes=(0, 0))


def integrate_nodal(grid: TimeGrid, values: Array) -> Array:
    """Composite-Simpson integral of nodal values over the whole grid,
    assembled interval by interval so integrand kinks at sampling times
    do not degrade the order."""
    total = None
    for i in range(grid.n_intervals):
        sl = grid.interval_slice(i)
        block = values[sl]
        h = grid.times[sl.start + 1] - grid.times[sl.start]
        part = simpson_on_interval(block, float(h))
        total = part if total is None else total + part
    return total


# ---------------------------------------------------------------------------
# Trajectory serialization

_FLOAT_FMT = "%.17g"


def write_state_csv(path, traj: Trajectory) -> None:
    """CSV with header t,x_0,...,x_{n-1}."""
    n = traj.states.shape[1]
    header = "t," + ",".join(f"x_{j}" for j in range(n))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for t, x in zip(traj.grid.times, traj.states):
            fh.write(",".join(_FLOAT_FMT % v for v in (t, *x)) + "\n")


def write_costate_csv(path, p: CostateTrajectory) -> None:
    """CSV with header t,p_0,...,p_{n-1},p0."""
    n = p.costates.shape[1]
    header = "t," + ",".join(f"p_{j}" for j in range(n)) + ",p0"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for t, row in zip(p.grid.times, p.costates):
            fh.write(",".join(_FLOAT_FMT % v for v in (t, *row, p.p0)) + "\n")


def _read_csv_columns(path, prefix: str):
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header[0] != "t" or not all(h.startswith(prefix) or h == "p0"
                                       for h in header[1:]):
            raise ValueError(f"{path}: unexpected header {header!r}")
        rows = []
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(tok) for tok in line.split(",")])
    if not rows:
        raise ValueError(f"{path}: no data rows")
    data = np.asarray(rows, dtype=float)
    return data[:, 0], data[:, 1:], header


def grid_from_times(times: Array, partition: Optional[Partition]) -> TimeGrid:
    """Rebuild a TimeGrid from explicit node times (e.g. a CSV column)."""
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) <= 0):
        raise ValueError("grid times must be strictly increasing")
    if partition is None:
        boundaries = np.array([0, times.size - 1])
    else:
        pos = np.searchsorted(times, partition.times)
        pos_clipped = np.minimum(pos, times.size - 1)
        if not (np.all(pos < times.size)
                and np.array_equal(times[pos_clipped], partition.times)):
            raise GridAlignmentError("grid is missing sampling times")
        boundaries = pos.astype(int)
    return TimeGrid(_frozen(times), _frozen(boundaries).astype(int), partition)


def read_state_csv(path, prob: OcpProblem, u) -> Trajectory:
    """Reload a state CSV; derivatives are re-evaluated from the problem
    so dense output and residual checks work on external bundles."""
    t, X, _ = _read_csv_columns(path, "x_")
    partition = u.partition if isinstance(u, PiecewiseConstantControl) else None
    grid = grid_from_times(t, partition)
    uval = _control_values_per_segment(u, grid)
    K = grid.K
    dr = np.empty((K, prob.n))
    dl = np.empty((K + 1, prob.n))
    for k in range(K):
        dr[k] = prob.dynamics(X[k], uval(k, grid.times[k]), float(grid.times[k]))
        dl[k + 1] = prob.dynamics(X[k + 1], uval(k, grid.times[k + 1]),
                                  float(grid.times[k + 1]))
    cost = np.zeros(t.size)
    return Trajectory(grid, _frozen(X), _frozen(dr), _frozen(dl), _frozen(cost))


def read_costate_csv(path, partition: Optional[Partition] = None):
    """Reload a costate CSV.  Returns (times, costates, p0); the caller
    decides how to embed them (no stored derivatives survive the file)."""
    t, data, header = _read_csv_columns(path, "p_")
    if header[-1] != "p0":
        raise ValueError(f"{path}: last column must be p0")
    P = data[:, :-1]
    p0_col = data[:, -1]
    if np.any(p0_col != p0_col[0]):
        raise ValueError(f"{path}: p0 column must be constant")
    return t, P, float(p0_col[0])
