"""Exact LQ references: Hamiltonian shooting, exact hold discretization,
condensed QP with bounds, and the fine-partition surrogate."""

import itertools

import numpy as np
import pytest
from scipy.linalg import expm

from sampled_ocp import (Box, LqProblemData, build_problem,
                         solve_lq_permanent, solve_lq_sampled_exact,
                         uniform_partition)
from sampled_ocp.errors import SurrogateRejectedError, UnreachableTargetError
from sampled_ocp.reference_oracles import (_ReducedQp, _solve_box_qp,
                                           _zoh_blocks, fine_surrogate)


def _scalar_transfer():
    return LqProblemData(A=[[0.0]], B=[[1.0]], Q=[[0.0]], R=[[1.0]],
                         horizon=1.0, x0=[0.0], xT=[1.0])


def _min_energy_double_integrator():
    return LqProblemData(A=[[0.0, 1.0], [0.0, 0.0]], B=[[0.0], [1.0]],
                         Q=np.zeros((2, 2)), R=[[1.0]], horizon=1.0,
                         x0=[1.0, 0.0], xT=[0.0, 0.0])


class TestPermanentLq:
    def test_scalar_minimum_energy_transfer(self):
        """Moving one unit in unit time with integrator dynamics: the
        constant unit control, unit costate, and cost one half."""
        ref = solve_lq_permanent(_scalar_transfer())
        ts = np.linspace(0, 1, 7)
        for t in ts:
            assert ref.u.at(t)[0] == pytest.approx(1.0, abs=1e-12)
            assert ref.p.at(t)[0] == pytest.approx(1.0, abs=1e-12)
        assert ref.cost == pytest.approx(0.5, abs=1e-12)

    def test_zero_transfer_flags_zero_costate(self):
        data = LqProblemData(A=[[0.0]], B=[[1.0]], Q=[[1.0]], R=[[1.0]],
                             horizon=1.0, x0=[0.0], xT=[0.0])
        ref = solve_lq_permanent(data)
        assert ref.cost == pytest.approx(0.0, abs=1e-14)
        assert np.linalg.norm(ref.p.at(0.5)) == pytest.approx(0.0, abs=1e-14)
        assert ref.p0 == -1.0
        assert any("p0" in note for note in ref.notes)

    def test_min_energy_against_gramian_formula(self):
        """Independent route: u*(t) = B' e^{A'(T-t)} G^{-1} (xT - e^{AT} x0)
        with the finite-horizon controllability Gramian G, evaluated by
        dense quadrature.  The classic closed form here is -6 + 12 t."""
        data = _min_energy_double_integrator()
        ref = solve_lq_permanent(data)
        A, B = np.asarray(data.A), np.asarray(data.B)
        ts = np.linspace(0, 1, 20001)
        integrand = np.array([
            (expm(A * (1.0 - s)) @ B) @ (expm(A * (1.0 - s)) @ B).T
            for s in ts])
        G = np.trapezoid(integrand, ts, axis=0)
        eta = np.linalg.solve(G, data.xT - expm(A * 1.0) @ data.x0)
        for t in (0.0, 0.25, 0.6, 1.0):
            u_gram = float((B.T @ expm(A.T * (1.0 - t)) @ eta)[0])
            assert ref.u.at(t)[0] == pytest.approx(u_gram, abs=1e-7)
        assert ref.u.at(0.0)[0] == pytest.approx(-6.0, abs=1e-9)
        assert ref.u.at(1.0)[0] == pytest.approx(6.0, abs=1e-9)

    def test_interior_gradient_zero_along_path(self, di_reference, di_problem):
        """grad_u H = B'p - R u* vanishes along the reference."""
        R = di_problem.lq.R
        B = di_problem.lq.B
        for t in np.linspace(0, 1, 33):
            gu = B.T @ di_reference.p.at(t) - R @ di_reference.u.at(t)
            assert np.linalg.norm(gu) <= 1e-8

    def test_adjoint_equation_residual(self, di_reference, di_problem):
        """The reference costate satisfies the adjoint equation: finite
        differences of p match -A'p + Qx to high order."""
        A, Q = di_problem.lq.A, di_problem.lq.Q
        ts = np.linspace(0.1, 0.9, 9)
        h = 1e-5
        for t in ts:
            dp = (di_reference.p.at(t + h) - di_reference.p.at(t - h)) / (2 * h)
            rhs = -A.T @ di_reference.p.at(t) + Q @ di_reference.x.at(t)
            assert np.linalg.norm(dp - rhs) <= 1e-6

    def test_unreachable_detected(self):
        # B = 0 on the moved coordinate: shooting matrix singular
        data = LqProblemData(A=np.zeros((2, 2)), B=[[1.0], [0.0]],
                             Q=np.eye(2), R=[[1.0]], horizon=1.0,
                             x0=[0.0, 0.0], xT=[0.0, 1.0])
        with pytest.raises(UnreachableTargetError):
            solve_lq_permanent(data)


class TestZohBlocks:
    def test_cost_matrix_against_quadrature(self, rng):
        """The block-exponential interval cost matrix equals the dense
        quadrature of e^{Abar' s} Qbar e^{Abar s} on random instances."""
        for _ in range(5):
            n, m = 2, 1
            A = rng.normal(size=(n, n)) * 0.8
            B = rng.normal(size=(n, m))
            Qh = rng.normal(size=(n, n))
            Q = Qh @ Qh.T
            R = np.array([[float(rng.uniform(0.5, 2.0))]])
            data = LqProblemData(A, B, Q, R, 1.0, np.zeros(n), np.zeros(n))
            h = float(rng.uniform(0.1, 0.5))
            E, F, S = _zoh_blocks(data, h)
            q = n + m
            Abar = np.zeros((q, q))
            Abar[:n, :n] = A
            Abar[:n, n:] = B
            Qbar = np.zeros((q, q))
            Qbar[:n, :n] = Q
            Qbar[n:, n:] = R
            from scipy.integrate import simpson
            ts = np.linspace(0, h, 2001)
            vals = np.array([expm(Abar.T * s) @ Qbar @ expm(Abar * s)
                             for s in ts])
            S_quad = simpson(vals, x=ts, axis=0)
            np.testing.assert_allclose(S, S_quad, atol=1e-10)
            np.testing.assert_allclose(E, expm(A * h), atol=1e-13)

    def test_step_map_matches_direct_integral(self):
        data = _min_energy_double_integrator()
        E, F, _ = _zoh_blocks(data, 0.25)
        np.testing.assert_allclose(E, [[1.0, 0.25], [0.0, 1.0]], atol=1e-14)
        np.testing.assert_allclose(F, [[0.03125], [0.25]], atol=1e-14)


class TestSampledExact:
    def test_single_interval_transfer(self):
        sol = solve_lq_sampled_exact(_scalar_transfer(), uniform_partition(1, 1.0))
        assert sol.control.values[0, 0] == pytest.approx(1.0, abs=1e-13)
        assert sol.cost == pytest.approx(0.5, abs=1e-13)

    def test_two_interval_double_integrator_closed_form(self):
        """With two equal holds the terminal equalities force u1 = -u0 and
        1 + 0.25 u0 = 0, so u = (-4, 4); derived by hand from the exact
        step maps."""
        prob = build_problem("lq_double_integrator")
        sol = solve_lq_sampled_exact(prob.lq, uniform_partition(2, 1.0),
                                     prob.control_set)
        np.testing.assert_allclose(sol.control.values.ravel(), [-4.0, 4.0],
                                   atol=1e-10)

    def test_refinement_cost_monotone_toward_permanent(self, di_problem,
                                                       di_reference):
        costs = []
        for N in (2, 4, 8, 16, 32, 64):
            sol = solve_lq_sampled_exact(di_problem.lq,
                                         uniform_partition(N, 1.0),
                                         di_problem.control_set)
            costs.append(sol.cost)
        assert all(b <= a + 1e-12 for a, b in zip(costs, costs[1:]))
        assert all(c >= di_reference.cost - 1e-12 for c in costs)
        assert costs[-1] - di_reference.cost < 0.01 * (costs[0] - di_reference.cost)

    def test_oracle_certificate_quadrature_level(self, lq8_oracle_report):
        assert lq8_oracle_report.ahg_sup <= 1e-8
        assert lq8_oracle_report.ae_residual <= 1e-8

    def test_active_set_against_brute_enumeration(self, rng):
        """Small bounded instances: the guided active-set result equals
        exhaustive enumeration over all clamp patterns."""
        prob = build_problem("lq_double_integrator", u_bound=5.0)
        data = prob.lq
        for N in (2, 3, 4):
            part = uniform_partition(N, 1.0)
            sol = solve_lq_sampled_exact(data, part, prob.control_set)
            qp = _ReducedQp(data, part)
            lo = np.full(N, -5.0)
            up = np.full(N, 5.0)
            best, best_val = None, np.inf
            for pattern in itertools.product((0, 1, 2), repeat=N):
                fixed_idx = np.array([j for j, a in enumerate(pattern) if a],
                                     dtype=int)
                fixed_val = np.array([lo[j] if pattern[j] == 1 else up[j]
                                      for j in fixed_idx])
                try:
                    u_try, _ = qp.kkt_solve(fixed_idx, fixed_val)
                except UnreachableTargetError:
                    continue
                if np.any(u_try < lo - 1e-9) or np.any(u_try > up + 1e-9):
                    continue
                if np.linalg.norm(qp.A_eq @ u_try - qp.b_eq) > 1e-8:
                    continue
                val = qp.objective(u_try)
                if val < best_val - 1e-12:
                    best_val, best = val, u_try
            np.testing.assert_allclose(sol.control.values.ravel(), best,
                                       atol=1e-8)

    def test_box_bound_saturation_at_fine_partitions(self):
        """The permanent optimum peaks past 6, so a [-6, 6] box saturates
        the first hold once the partition resolves the peak."""
        prob = build_problem("lq_double_integrator", u_bound=6.0)
        sol = solve_lq_sampled_exact(prob.lq, uniform_partition(64, 1.0),
                                     prob.control_set)
        assert sol.control.values[0, 0] == pytest.approx(-6.0, abs=1e-12)

    def test_ball_set_refused(self):
        from sampled_ocp import Ball
        from sampled_ocp.errors import OracleError
        data = _scalar_transfer()
        with pytest.raises(OracleError):
            solve_lq_sampled_exact(data, uniform_partition(2, 1.0),
                                   Ball([0.0], 5.0))


@pytest.fixture(scope="module")
def lq8_oracle_report(di_problem):
    from sampled_ocp import Extremal
    from sampled_ocp.pmp_check import evaluate_extremal
    sol = solve_lq_sampled_exact(di_problem.lq, uniform_partition(8, 1.0),
                                 di_problem.control_set)
    e = Extremal(di_problem, sol.state, sol.control, sol.costate, -1.0,
                 feas_tol=1e-10)
    return evaluate_extremal(e)


@pytest.fixture(scope="module")
def di_surrogates(di_problem):
    """Surrogates at 256 and 512 sharing one cascading solve chain."""
    cache = {}
    return (fine_surrogate(di_problem, 256, cache=cache),
            fine_surrogate(di_problem, 512, cache=cache))


class TestFineSurrogate:
    def test_rejects_low_resolution(self, aq_problem):
        with pytest.raises(SurrogateRejectedError):
            fine_surrogate(aq_problem, 64)

    def test_rejects_outresolved_sweep(self, aq_problem):
        with pytest.raises(SurrogateRejectedError):
            fine_surrogate(aq_problem, 256, sweep_max_n=100000)

    def test_lq_surrogate_agrees_with_analytic(self, di_surrogates,
                                               di_reference):
        """Self-consistency route vs the analytic one: a fine sampled
        solve stands within its own error bar of the analytic optimum."""
        ref = di_surrogates[1]
        ts = np.linspace(0, 1, 513)
        err = float(np.max(np.linalg.norm(
            ref.x.sample(ts) - di_reference.x.sample(ts), axis=1)))
        assert err <= 1e-4
        assert ref.error_bar is not None and ref.error_bar < 1e-3
        assert abs(ref.cost - di_reference.cost) < 1e-4

    def test_error_bar_shrinks_with_resolution(self, di_surrogates):
        bar256, bar512 = di_surrogates[0].error_bar, di_surrogates[1].error_bar
        assert bar512 <= 0.5 * bar256 * 1.05  # halves, 5% slack

    def test_control_free_dynamics_equals_plain_integration(self):
        """When the dynamics ignore the control the optimal control is
        zero and the surrogate reproduces the uncontrolled trajectory."""
        from sampled_ocp import build_time_grid, integrate_state
        from sampled_ocp.problem_model import Box, problem_from_callables
        e_val = float(np.exp(1.0))
        prob = problem_from_callables(
            f=lambda x, u, t: np.array([x[0]]),
            L=lambda x, u, t: float(u @ u), n=1, m=1, horizon=1.0,
            x0=[1.0], xT=[e_val], control_set=Box([-1.0], [1.0]))
        ref = fine_surrogate(prob, 256,
                             solver_options=None)
        grid = build_time_grid(1.0, uniform_partition(512, 1.0))
        traj = integrate_state(prob, lambda t: np.zeros(1), grid)
        ts = np.linspace(0, 1, 65)
        np.testing.assert_allclose(ref.x.sample(ts), traj.sample(ts),
                                   atol=1e-9)
        np.testing.assert_allclose(np.asarray(ref.u.values), 0.0, atol=1e-12)
