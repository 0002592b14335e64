"""Optimal control problem instances and convex control sets.

A problem bundles the dynamics f(x, u, t), the running cost L(x, u, t),
their first partial derivatives, the horizon and endpoint states, and a
compact convex control set with closed-form Euclidean projection.  All
types here are immutable after construction and every operation is pure,
so problems can be shared freely across concurrent evaluations.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .errors import ConfigFormatError, MembershipError, ProblemLookupError

# Tolerance for "u in U" preconditions; absorbs projection round-off.
TOL_SET = 1e-10

Array = np.ndarray
Dynamics = Callable[[Array, Array, float], Array]
Scalar = Callable[[Array, Array, float], float]


def _frozen(a) -> Array:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


# ---------------------------------------------------------------------------
# Control sets


@dataclass(frozen=True)
class Box:
    """Axis-aligned box {v : lower <= v <= upper}, componentwise."""

    lower: Array
    upper: Array

    def __post_init__(self):
        lo = _frozen(np.atleast_1d(self.lower))
        up = _frozen(np.atleast_1d(self.upper))
        if lo.shape != up.shape or lo.ndim != 1:
            raise ValueError("box bounds must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(up))):
            raise ValueError("box bounds must be finite (compact set)")
        if np.any(lo > up):
            raise ValueError("box is empty: lower > upper somewhere")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)

    @property
    def dim(self) -> int:
        return self.lower.size

    def project(self, v: Array) -> Array:
        return np.clip(np.asarray(v, dtype=float), self.lower, self.upper)

    def bounding_box(self):
        return self.lower, self.upper


@dataclass(frozen=True)
class Ball:
    """Closed Euclidean ball {v : ||v - center|| <= radius}."""

    center: Array
    radius: float

    def __post_init__(self):
        c = _frozen(np.atleast_1d(self.center))
        r = float(self.radius)
        if not (math.isfinite(r) and r > 0):
            raise ValueError("ball radius must be finite and positive")
        if not np.all(np.isfinite(c)):
            raise ValueError("ball center must be finite")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", r)

    @property
    def dim(self) -> int:
        return self.center.size

    def project(self, v: Array) -> Array:
        v = np.asarray(v, dtype=float)
        d = v - self.center
        nd = float(np.linalg.norm(d))
        if nd <= self.radius:
            return v.copy()
        return self.center + d * (self.radius / nd)

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius


@dataclass(frozen=True)
class ProductSet:
    """Cartesian product of boxes and balls; projection is per factor."""

    factors: tuple

    def __post_init__(self):
        factors = tuple(self.factors)
        if not factors:
            raise ValueError("product of zero factors")
        for f in factors:
            if not isinstance(f, (Box, Ball)):
                raise ValueError("product factors must be Box or Ball")
        object.__setattr__(self, "factors", factors)

    @property
    def dim(self) -> int:
        return sum(f.dim for f in self.factors)

    def _slices(self):
        off = 0
        for f in self.factors:
            yield f, slice(off, off + f.dim)
            off += f.dim

    def project(self, v: Array) -> Array:
        v = np.asarray(v, dtype=float)
        out = np.empty_like(v)
        for f, sl in self._slices():
            out[sl] = f.project(v[sl])
        return out

    def bounding_box(self):
        los, ups = [], []
        for f in self.factors:
            lo, up = f.bounding_box()
            los.append(lo)
            ups.append(up)
        return np.concatenate(los), np.concatenate(ups)


ControlSet = Union[Box, Ball, ProductSet]


def project(control_set: ControlSet, v: Array) -> Array:
    """Euclidean projection of v onto the control set (closed form)."""
    return control_set.project(v)


def distance_to(control_set: ControlSet, v: Array) -> float:
    """Euclidean distance from v to the control set."""
    v = np.asarray(v, dtype=float)
    return float(np.linalg.norm(v - control_set.project(v)))


def normal_cone_residual(control_set: ControlSet, u: Array, g: Array,
                         tol: float = TOL_SET) -> float:
    """Distance-based test of g belonging to the normal cone at u.

    Returns ||project(U, u + g) - u||.  The value is zero (in exact
    arithmetic) exactly when g is normal to U at u.  Requires u to lie
    in U up to `tol`.
    """
    u = np.asarray(u, dtype=float)
    d = distance_to(control_set, u)
    if d > tol:
        raise MembershipError(
            f"point is outside the control set by {d:.3e} (> {tol:.1e})")
    moved = control_set.project(u + np.asarray(g, dtype=float))
    return float(np.linalg.norm(moved - u))


def sample_grid(control_set: ControlSet, density: int) -> Array:
    """Deterministic point grid covering the set, used for scans over U.

    Boxes get a tensor grid with `density` points per dimension.  A ball
    gets the grid of its bounding box with exterior points projected
    onto the sphere, which covers both interior and boundary densely.
    Only intended for dim <= 2; higher dimensions use coordinate scans.
    """
    if isinstance(control_set, Box):
        axes = [np.linspace(control_set.lower[j], control_set.upper[j], density)
                for j in range(control_set.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)
    if isinstance(control_set, Ball):
        lo, up = control_set.bounding_box()
        axes = [np.linspace(lo[j], up[j], density) for j in range(control_set.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        inside = np.linalg.norm(pts - control_set.center, axis=1) <= control_set.radius
        outer = pts[~inside]
        if outer.size:
            d = outer - control_set.center
            nd = np.linalg.norm(d, axis=1, keepdims=True)
            shell = control_set.center + d * (control_set.radius / nd)
            return np.vstack([pts[inside], shell])
        return pts[inside]
    if isinstance(control_set, ProductSet):
        grids = [sample_grid(f, density) for f in control_set.factors]
        out = grids[0]
        for g in grids[1:]:
            out = np.hstack([np.repeat(out, len(g), axis=0),
                             np.tile(g, (len(out), 1))])
        return out
    raise TypeError(f"unsupported control set {type(control_set)!r}")


def grid_spacing(control_set: ControlSet, density: int) -> float:
    """Largest spacing of the grid produced by :func:`sample_grid`."""
    lo, up = control_set.bounding_box()
    widths = (up - lo) / max(density - 1, 1)
    return float(np.max(widths)) if widths.size else 0.0


# ---------------------------------------------------------------------------
# Problem container


@dataclass(frozen=True)
class LqProblemData:
    """Matrices of a constant-coefficient linear-quadratic problem.

    Dynamics xdot = A x + B u with running cost (x'Qx + u'Ru)/2.
    R must be symmetric positive definite, Q symmetric positive
    semidefinite.
    """

    A: Array
    B: Array
    Q: Array
    R: Array
    horizon: float
    x0: Array
    xT: Array

    def __post_init__(self):
        A = _frozen(np.atleast_2d(self.A))
        B = _frozen(np.atleast_2d(self.B))
        Q = _frozen(np.atleast_2d(self.Q))
        R = _frozen(np.atleast_2d(self.R))
        x0 = _frozen(np.atleast_1d(self.x0))
        xT = _frozen(np.atleast_1d(self.xT))
        n = A.shape[0]
        if A.shape != (n, n) or B.shape[0] != n or Q.shape != (n, n):
            raise ValueError("inconsistent LQ matrix shapes")
        m = B.shape[1]
        if R.shape != (m, m):
            raise ValueError("R must be m x m")
        if not np.allclose(R, R.T):
            raise ValueError("R must be symmetric")
        if np.any(np.linalg.eigvalsh(R) <= 0):
            raise ValueError("R must be positive definite")
        if not np.allclose(Q, Q.T):
            raise ValueError("Q must be symmetric")
        if np.any(np.linalg.eigvalsh(Q) < -1e-12):
            raise ValueError("Q must be positive semidefinite")
        if x0.size != n or xT.size != n:
            raise ValueError("endpoint states must have length n")
        for name, val in (("A", A), ("B", B), ("Q", Q), ("R", R),
                          ("x0", x0), ("xT", xT)):
            object.__setattr__(self, name, val)
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True)
class AffineQuadraticStructure:
    """Control-affine dynamics with cost quadratic in the control.

    f(x, u, t) = control_matrix(x, t) @ u + drift(x, t)
    L(x, u, t) = u' control_cost(t) u / 2 + control_cost_lin(x, t) . u
                 + state_cost(x, t)

    When control_cost(t) is positive definite the pointwise maximizer of
    the Hamiltonian has the closed form
        u = control_cost(t)^{-1} (control_matrix(x,t)' p - control_cost_lin(x,t)),
    clipped to the control set.
    """

    control_matrix: Callable[[Array, float], Array]   # (n, m)
    drift: Callable[[Array, float], Array]            # (n,)
    control_cost: Callable[[float], Array]            # (m, m), PSD
    control_cost_lin: Callable[[Array, float], Array]  # (m,)
    state_cost: Callable[[Array, float], float]


@dataclass(frozen=True)
class OcpProblem:
    """A fixed-endpoint optimal control problem on [0, horizon].

    Evaluators must be deterministic and side-effect free; they receive
    plain float arrays of shapes (n,) and (m,) plus a float time.
    """

    n: int
    m: int
    horizon: float
    x0: Array
    xT: Array
    dynamics: Dynamics
    dynamics_jac_x: Callable[[Array, Array, float], Array]
    dynamics_jac_u: Callable[[Array, Array, float], Array]
    cost: Scalar
    cost_grad_x: Callable[[Array, Array, float], Array]
    cost_grad_u: Callable[[Array, Array, float], Array]
    control_set: ControlSet
    name: str = ""
    lq: Optional[LqProblemData] = None
    affine_quadratic: Optional[AffineQuadraticStructure] = None

    def __post_init__(self):
        if self.n <= 0 or self.m <= 0:
            raise ValueError("state and control dimensions must be positive")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        object.__setattr__(self, "horizon", float(self.horizon))
        object.__setattr__(self, "x0", _frozen(np.atleast_1d(self.x0)))
        object.__setattr__(self, "xT", _frozen(np.atleast_1d(self.xT)))
        if self.x0.size != self.n or self.xT.size != self.n:
            raise ValueError("endpoint states must have length n")
        if self.control_set.dim != self.m:
            raise ValueError("control set dimension must equal m")

    def __repr__(self):
        return (f"OcpProblem(name={self.name!r}, n={self.n}, m={self.m}, "
                f"T={self.horizon})")


def finite_difference_derivatives(f: Dynamics, L: Scalar, n: int, m: int):
    """Central-difference Jacobians/gradients for user-supplied f and L.

    Step is 1e-6 * (1 + ||argument||), which balances truncation and
    round-off for double precision.  Returns the four derivative
    evaluators (jac_x, jac_u, grad_x, grad_u).
    """

    def _step(v):
        return 1e-6 * (1.0 + float(np.linalg.norm(v)))

    def jac_x(x, u, t):
        x = np.asarray(x, dtype=float)
        h = _step(x)
        out = np.empty((n, n))
        for j in range(n):
            e = np.zeros(n)
            e[j] = h
            out[:, j] = (np.asarray(f(x + e, u, t)) - np.asarray(f(x - e, u, t))) / (2 * h)
        return out

    def jac_u(x, u, t):
        u = np.asarray(u, dtype=float)
        h = _step(u)
        out = np.empty((n, m))
        for j in range(m):
            e = np.zeros(m)
            e[j] = h
            out[:, j] = (np.asarray(f(x, u + e, t)) - np.asarray(f(x, u - e, t))) / (2 * h)
        return out

    def grad_x(x, u, t):
        x = np.asarray(x, dtype=float)
        h = _step(x)
        out = np.empty(n)
        for j in range(n):
            e = np.zeros(n)
            e[j] = h
            out[j] = (L(x + e, u, t) - L(x - e, u, t)) / (2 * h)
        return out

    def grad_u(x, u, t):
        u = np.asarray(u, dtype=float)
        h = _step(u)
        out = np.empty(m)
        for j in range(m):
            e = np.zeros(m)
            e[j] = h
            out[j] = (L(x, u + e, t) - L(x, u - e, t)) / (2 * h)
        return out

    return jac_x, jac_u, grad_x, grad_u


def problem_from_callables(f: Dynamics, L: Scalar, n: int, m: int,
                           horizon: float, x0, xT, control_set: ControlSet,
                           name: str = "user") -> OcpProblem:
    """Build a problem from f and L alone, with FD-backed derivatives."""
    jac_x, jac_u, grad_x, grad_u = finite_difference_derivatives(f, L, n, m)
    return OcpProblem(n=n, m=m, horizon=horizon, x0=x0, xT=xT,
                      dynamics=f, dynamics_jac_x=jac_x, dynamics_jac_u=jac_u,
                      cost=L, cost_grad_x=grad_x, cost_grad_u=grad_u,
                      control_set=control_set, name=name)


# ---------------------------------------------------------------------------
# Built-in problem catalog


@dataclass(frozen=True)
class ProblemCatalogEntry:
    name: str
    builder: Callable[..., OcpProblem]
    reference_kind: str  # "lq_exact" | "fine_partition_surrogate" | "none"
    summary: str = ""


def _as_matrix(value, rows: int, cols: int, what: str) -> Array:
    """Accept a nested list, a flat row-major list, or a scalar.

    A scalar for a square slot means that multiple of the identity.
    """
    a = np.asarray(value, dtype=float)
    if a.ndim == 0:
        if rows != cols:
            raise ConfigFormatError(f"{what}: scalar given for non-square slot")
        a = float(a) * np.eye(rows)
    if a.ndim == 1:
        if a.size != rows * cols:
            raise ConfigFormatError(
                f"{what}: expected {rows * cols} row-major entries, got {a.size}")
        a = a.reshape(rows, cols)
    if a.shape != (rows, cols):
        raise ConfigFormatError(f"{what}: expected shape {(rows, cols)}, got {a.shape}")
    return a


def build_cubic_counterexample(horizon: float = 1.0,
                               control_set: Optional[ControlSet] = None) -> OcpProblem:
    """Scalar problem with dynamics u**3, zero cost, zero endpoints.

    The zero control with unit costate is first-order stationary but not
    a pointwise Hamiltonian maximizer, so it separates the gradient-type
    certificate from the maximization-type one.
    """
    U = control_set if control_set is not None else Box([-1.0], [1.0])

    def f(x, u, t):
        return np.array([u[0] ** 3])

    def jac_x(x, u, t):
        return np.zeros((1, 1))

    def jac_u(x, u, t):
        return np.array([[3.0 * u[0] ** 2]])

    def L(x, u, t):
        return 0.0

    def grad_x(x, u, t):
        return np.zeros(1)

    def grad_u(x, u, t):
        return np.zeros(1)

    return OcpProblem(n=1, m=1, horizon=horizon, x0=[0.0], xT=[0.0],
                      dynamics=f, dynamics_jac_x=jac_x, dynamics_jac_u=jac_u,
                      cost=L, cost_grad_x=grad_x, cost_grad_u=grad_u,
                      control_set=U, name="cubic_counterexample")


def build_lq_generic(A=0.0, B=None, Q=None, R=None, horizon: float = 1.0,
                     x0=None, xT=None,
                     control_set: Optional[ControlSet] = None) -> OcpProblem:
    """Generic LQ problem xdot = A x + B u, L = (x'Qx + u'Ru)/2."""
    if x0 is None:
        x0 = np.zeros(2)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    n = x0.size
    A = np.asarray(A, dtype=float)
    if A.ndim == 0:
        A = float(A) * np.eye(n)
    A = _as_matrix(A, n, n, "A")
    if B is None:
        B = np.eye(n)
    B = np.asarray(B, dtype=float)
    if B.ndim == 0:
        B = float(B) * np.eye(n)
    if B.ndim == 1:
        if B.size % n != 0:
            raise ConfigFormatError(f"B: length {B.size} not a multiple of n={n}")
        B = B.reshape(n, B.size // n)
    m = B.shape[1]
    B = _as_matrix(B, n, m, "B")
    Q = _as_matrix(np.eye(n) if Q is None else Q, n, n, "Q")
    R = _as_matrix(np.eye(m) if R is None else R, m, m, "R")
    xT = np.zeros(n) if xT is None else np.atleast_1d(np.asarray(xT, dtype=float))
    U = control_set if control_set is not None else Box(-10.0 * np.ones(m),
                                                        10.0 * np.ones(m))
    return _lq_problem(LqProblemData(A, B, Q, R, float(horizon), x0, xT), U,
                       name="lq_generic")


def build_lq_double_integrator(Q=None, R=1.0, horizon: float = 1.0,
                               x0=(1.0, 0.0), xT=(0.0, 0.0), u_bound: float = 20.0,
                               control_set: Optional[ControlSet] = None) -> OcpProblem:
    """Double integrator x1dot = x2, x2dot = u with quadratic cost."""
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    B = np.array([[0.0], [1.0]])
    Q = _as_matrix(np.eye(2) if Q is None else Q, 2, 2, "Q")
    R = _as_matrix(R, 1, 1, "R")
    U = control_set if control_set is not None else Box([-float(u_bound)],
                                                        [float(u_bound)])
    return _lq_problem(LqProblemData(A, B, Q, R, float(horizon),
                                     np.asarray(x0, dtype=float),
                                     np.asarray(xT, dtype=float)),
                       U, name="lq_double_integrator")


def _lq_problem(data: LqProblemData, control_set: ControlSet, name: str) -> OcpProblem:
    A, B, Q, R = data.A, data.B, data.Q, data.R
    n, m = data.n, data.m

    def f(x, u, t):
        return A @ x + B @ u

    def jac_x(x, u, t):
        return A

    def jac_u(x, u, t):
        return B

    def L(x, u, t):
        return 0.5 * (x @ Q @ x + u @ R @ u)

    def grad_x(x, u, t):
        return Q @ x

    def grad_u(x, u, t):
        return R @ u

    aq = AffineQuadraticStructure(
        control_matrix=lambda x, t: B,
        drift=lambda x, t: A @ x,
        control_cost=lambda t: R,
        control_cost_lin=lambda x, t: np.zeros(m),
        state_cost=lambda x, t: 0.5 * float(x @ Q @ x),
    )
    return OcpProblem(n=n, m=m, horizon=data.horizon, x0=data.x0, xT=data.xT,
                      dynamics=f, dynamics_jac_x=jac_x, dynamics_jac_u=jac_u,
                      cost=L, cost_grad_x=grad_x, cost_grad_u=grad_u,
                      control_set=control_set, name=name, lq=data,
                      affine_quadratic=aq)


def build_affine_quadratic(coupling: float = 0.3, cross_weight: float = 0.1,
                           r_value: float = 1.0, horizon: float = 1.0,
                           x0=(0.5, 0.0), xT=(0.0, 0.0), u_bound: float = 8.0,
                           control_set: Optional[ControlSet] = None) -> OcpProblem:
    """Nonlinear control-affine pendulum-like system with quadratic cost.

    Dynamics:  x1dot = x2,  x2dot = -sin(x1) + (1 + coupling*cos(x1)) u.
    Cost:      L = r_value*u^2/2 + cross_weight*x2*u + (x1^2 + x2^2)/2.
    """
    c = float(coupling)
    w = float(cross_weight)
    r = float(r_value)
    if r <= 0:
        raise ValueError("r_value must be positive")
    U = control_set if control_set is not None else Box([-float(u_bound)],
                                                        [float(u_bound)])

    def gain(x):
        return 1.0 + c * math.cos(x[0])

    def f(x, u, t):
        return np.array([x[1], -math.sin(x[0]) + gain(x) * u[0]])

    def jac_x(x, u, t):
        return np.array([[0.0, 1.0],
                         [-math.cos(x[0]) - c * math.sin(x[0]) * u[0], 0.0]])

    def jac_u(x, u, t):
        return np.array([[0.0], [gain(x)]])

    def L(x, u, t):
        return 0.5 * r * u[0] ** 2 + w * x[1] * u[0] + 0.5 * (x[0] ** 2 + x[1] ** 2)

    def grad_x(x, u, t):
        return np.array([x[0], x[1] + w * u[0]])

    def grad_u(x, u, t):
        return np.array([r * u[0] + w * x[1]])

    aq = AffineQuadraticStructure(
        control_matrix=lambda x, t: np.array([[0.0], [gain(x)]]),
        drift=lambda x, t: np.array([x[1], -math.sin(x[0])]),
        control_cost=lambda t: np.array([[r]]),
        control_cost_lin=lambda x, t: np.array([w * x[1]]),
        state_cost=lambda x, t: 0.5 * float(x[0] ** 2 + x[1] ** 2),
    )
    return OcpProblem(n=2, m=1, horizon=horizon, x0=x0, xT=xT,
                      dynamics=f, dynamics_jac_x=jac_x, dynamics_jac_u=jac_u,
                      cost=L, cost_grad_x=grad_x, cost_grad_u=grad_u,
                      control_set=U, name="affine_quadratic",
                      affine_quadratic=aq)


_CATALOG = (
    ProblemCatalogEntry(
        "cubic_counterexample", build_cubic_counterexample, "none",
        "scalar cubic-in-u dynamics, zero cost, zero endpoints; separates "
        "gradient-type from maximization-type stationarity"),
    ProblemCatalogEntry(
        "lq_double_integrator", build_lq_double_integrator, "lq_exact",
        "double integrator with quadratic cost; analytic and exact sampled "
        "references available"),
    ProblemCatalogEntry(
        "lq_generic", build_lq_generic, "lq_exact",
        "user-supplied constant matrices A, B, Q, R"),
    ProblemCatalogEntry(
        "affine_quadratic", build_affine_quadratic, "fine_partition_surrogate",
        "nonlinear control-affine pendulum-like system with quadratic cost"),
)


def catalog() -> list[ProblemCatalogEntry]:
    """All built-in problem entries, fixed order."""
    return list(_CATALOG)


def catalog_entry(name: str) -> ProblemCatalogEntry:
    for entry in _CATALOG:
        if entry.name == name:
            return entry
    raise ProblemLookupError(
        f"unknown catalog problem {name!r}; known: "
        + ", ".join(e.name for e in _CATALOG))


def build_problem(name: str, **params) -> OcpProblem:
    """Instantiate a catalog problem by name."""
    entry = catalog_entry(name)
    return entry.builder(**params)


# ---------------------------------------------------------------------------
# Problem configuration files (JSON)


def _control_set_from_dict(d: dict) -> ControlSet:
    try:
        kind = d["kind"]
    except (TypeError, KeyError):
        raise ConfigFormatError("control_set: missing 'kind'")
    if kind == "box":
        if "bounds" in d:
            lo, up = d["bounds"]
            return Box(np.atleast_1d(lo), np.atleast_1d(up))
        return Box(np.atleast_1d(d["lower"]), np.atleast_1d(d["upper"]))
    if kind == "ball":
        return Ball(np.atleast_1d(d["center"]), float(d["radius"]))
    if kind == "product":
        return ProductSet(tuple(_control_set_from_dict(f) for f in d["factors"]))
    raise ConfigFormatError(f"control_set: unknown kind {kind!r}")


def load_problem_config(path: str) -> OcpProblem:
    """Load a problem from a JSON configuration file.

    Recognized fields: `problem` (catalog name), `params` (builder
    keyword arguments; matrices as row-major lists), and optional
    overrides `horizon`, `x0`, `xT`, `control_set`.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigFormatError(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigFormatError(
            f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigFormatError(f"{path}: top level must be an object")
    try:
        name = raw["problem"]
    except KeyError:
        raise ConfigFormatError(f"{path}: missing required key 'problem'")
    params = dict(raw.get("params", {}))
    if not isinstance(params, dict):
        raise ConfigFormatError(f"{path}: 'params' must be an object")
    for key in ("horizon", "x0", "xT"):
        if key in raw:
            params[key] = raw[key]
    if "control_set" in raw:
        params["control_set"] = _control_set_from_dict(raw["control_set"])
    try:
        return build_problem(name, **params)
    except ProblemLookupError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigFormatError(f"{path}: key 'problem'/'params': {exc}") from exc
