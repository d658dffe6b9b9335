import numpy as np
import pytest

from cfpsplit.coupling import build_coupling, consensus_residual, scatter
from cfpsplit.sets import Box, Halfspace, Hyperplane
from cfpsplit.solvers import (
    ALGORITHMS,
    FeasibilityProblem,
    SolveStatus,
    SolverConfig,
    solve,
    solve_afb,
    solve_alm,
    solve_dr,
    solve_dykstra,
    solve_falm,
    solve_fb,
    solve_mpa,
    solve_vn,
    t_next,
    theta_next,
)
from conftest import flow_problem


def no_stop(x0, max_iter=3000, **kw):
    """Config that never stops on the detector (limits are read off the tail)."""
    return SolverConfig(x0=np.asarray(x0, dtype=float), max_iter=max_iter,
                        rc_threshold=0.0, feas_tol=0.0, **kw)


class TestThetaT:
    def test_theta_at_one(self):
        assert theta_next(1.0) == pytest.approx((np.sqrt(5) - 1) / 2, abs=1e-14)

    def test_theta_monotone_decrease_near_zero(self):
        th = 1e-3
        nxt = theta_next(th)
        assert 0 < nxt < th

    def test_theta_defining_equation(self):
        for th in (1.0, 0.61, 0.3, 0.05):
            nxt = theta_next(th)
            assert (1 - nxt) / nxt**2 == pytest.approx(1 / th**2, rel=1e-12)

    def test_theta_out_of_range(self):
        for bad in (0.0, -0.5, 1.5):
            with pytest.raises(ValueError):
                theta_next(bad)

    def test_t_values(self):
        assert t_next(1.0) == pytest.approx((1 + np.sqrt(2)) / 2)
        assert t_next(3.0) == pytest.approx((1 + np.sqrt(10)) / 2)

    def test_t_growth(self):
        t = 1.0
        for _ in range(50):
            nxt = t_next(t)
            assert nxt >= (t + 1) / 2
            t = nxt

    def test_t_out_of_range(self):
        with pytest.raises(ValueError):
            t_next(0.5)


class TestForwardBackward:
    def test_hand_iterated_feasible_sequence(self, pair_feasible):
        # v+ = (min(v, 2) + clamp(v, 1, 5)) / 2 starting from 10
        want = []
        v = 10.0
        for _ in range(4):
            v = (min(v, 2.0) + min(max(v, 1.0), 5.0)) / 2.0
            want.append(v)
        for k, w in enumerate(want, start=1):
            r = solve_fb(pair_feasible, no_stop([10.0], max_iter=k))
            assert r.final_v[0] == pytest.approx(w, abs=1e-14)

    def test_feasible_status_and_limit(self, pair_feasible):
        r = solve_fb(pair_feasible, SolverConfig(x0=np.array([10.0])))
        assert r.status is SolveStatus.FEASIBLE
        assert abs(r.final_v[0] - 2.0) <= 1e-5

    def test_infeasible_objective_limit(self, pair_infeasible):
        r = solve_fb(pair_infeasible, no_stop([10.0]))
        assert r.trace[-1].objective == pytest.approx(0.25, abs=1e-9)
        assert r.final_v[0] == pytest.approx(0.5, abs=1e-9)

    def test_matches_vn_coordinatewise(self, pair_feasible):
        for k in (1, 3, 10, 50):
            cfg = no_stop([10.0], max_iter=k)
            assert solve_fb(pair_feasible, cfg).final_v == pytest.approx(
                solve_vn(pair_feasible, cfg).final_v, abs=1e-12
            )

    def test_consensual_iterates(self, pair_infeasible):
        r = solve_fb(pair_infeasible, no_stop([3.0], max_iter=50))
        assert consensus_residual(r.final_S, pair_infeasible.coupling) <= 1e-10

    def test_invalid_schedule(self, pair_feasible):
        with pytest.raises(ValueError):
            solve_fb(pair_feasible, SolverConfig(gamma=2.5, x0=np.array([0.0])))
        with pytest.raises(ValueError):
            solve_fb(pair_feasible, SolverConfig(lam=1.5, x0=np.array([0.0])))


class TestAcceleratedForwardBackward:
    def test_feasible_endpoint_in_intersection(self, pair_feasible):
        r = solve_afb(pair_feasible, SolverConfig(x0=np.array([10.0])))
        assert r.status is SolveStatus.FEASIBLE
        assert 1.0 - 1e-6 <= r.final_v[0] <= 2.0 + 1e-6

    def test_infeasible_objective_limit(self, pair_infeasible):
        r = solve_afb(pair_infeasible, no_stop([10.0]))
        assert r.trace[-1].objective == pytest.approx(0.25, abs=1e-6)

    def test_first_momentum_parameter_admissible(self):
        th1 = theta_next(1.0)
        assert (1 - th1) / th1**2 <= 1.0 + 1e-12

    def test_d_membership_along_run(self, pair_infeasible):
        c = pair_infeasible.coupling
        for k in (1, 2, 5, 20):
            r = solve_afb(pair_infeasible, no_stop([7.0], max_iter=k))
            assert consensus_residual(r.final_S, c) <= 1e-10


class TestDouglasRachford:
    def test_feasible(self, pair_feasible):
        r = solve_dr(pair_feasible, SolverConfig(x0=np.array([10.0])))
        assert r.status is SolveStatus.FEASIBLE
        assert 1.0 - 1e-5 <= r.final_v[0] <= 2.0 + 1e-5

    def test_infeasible_objective_limit(self, pair_infeasible):
        r = solve_dr(pair_infeasible, no_stop([10.0]))
        assert r.trace[-1].objective == pytest.approx(0.125, abs=1e-6)

    def test_trivial_whole_space_sets_stop_at_one(self):
        c = build_coupling([{0, 1}, {1, 2}], 3)
        sets = (
            Box(np.full(2, -np.inf), np.full(2, np.inf)),
            Box(np.full(2, -np.inf), np.full(2, np.inf)),
        )
        r = solve_dr(FeasibilityProblem(c, sets), SolverConfig(x0=np.zeros(3)))
        assert r.status is SolveStatus.FEASIBLE and r.iterations == 1

    def test_gamma_must_be_constant_positive(self, pair_feasible):
        with pytest.raises(ValueError):
            solve_dr(pair_feasible, SolverConfig(gamma=0.0))
        with pytest.raises(ValueError):
            solve_dr(pair_feasible, SolverConfig(gamma=lambda k: 1.0))


class TestALM:
    def test_infeasible_objective_limit(self, pair_infeasible):
        r = solve_alm(pair_infeasible, no_stop([10.0]))
        assert r.trace[-1].objective == pytest.approx(0.125, abs=1e-6)

    def test_feasible(self, pair_feasible):
        r = solve_alm(pair_feasible, SolverConfig(x0=np.array([10.0])))
        assert r.status is SolveStatus.FEASIBLE

    def test_feasible_start_detected_first_iteration(self, pair_feasible):
        r = solve_alm(pair_feasible, SolverConfig(x0=np.array([1.5])))
        assert r.status is SolveStatus.FEASIBLE and r.iterations == 1


class TestFALM:
    def test_momentum_counter_sequence(self):
        t1 = 1.0
        t2 = t_next(t1)
        t3 = t_next(t2)
        assert t2 == pytest.approx((1 + np.sqrt(2)) / 2, abs=1e-14)
        assert t3 == pytest.approx((1 + np.sqrt(1 + t2 * t2)) / 2, abs=1e-14)

    def test_infeasible_objective_limit_not_slower_than_alm(self, pair_infeasible):
        target = 0.125
        tol = 1e-6

        def iters_to(fn):
            r = fn(pair_infeasible, no_stop([10.0]))
            ok = np.abs(np.array([t.objective for t in r.trace]) - target) <= tol
            below = np.flatnonzero(ok)
            assert below.size, "objective never reached the analytic limit"
            return int(below[0])

        assert iters_to(solve_falm) <= iters_to(solve_alm)

    def test_feasible(self, pair_feasible):
        r = solve_falm(pair_feasible, SolverConfig(x0=np.array([10.0])))
        assert r.status is SolveStatus.FEASIBLE


class TestVonNeumann:
    def test_infeasible_fixed_point_and_displacement(self, pair_infeasible):
        r = solve_vn(pair_infeasible, no_stop([10.0]))
        assert r.final_v[0] == pytest.approx(0.5, abs=1e-9)
        assert r.trace[-1].displacement == pytest.approx(np.sqrt(0.5), abs=1e-9)

    def test_feasible_geometric_approach(self, pair_feasible):
        r = solve_vn(pair_feasible, no_stop([10.0], max_iter=60))
        assert r.final_v[0] == pytest.approx(2.0, abs=1e-12)
        # offset halves each step once inside the second set's band
        r3 = solve_vn(pair_feasible, no_stop([10.0], max_iter=3))
        assert r3.final_v[0] == pytest.approx(2.0 + 1.5 / 4.0, abs=1e-12)

    def test_fixed_point_stays(self, pair_feasible):
        r = solve_vn(pair_feasible, no_stop([1.5], max_iter=25))
        assert r.final_v[0] == pytest.approx(1.5, abs=0)

    def test_monotone_set_residual(self):
        inst, problem, _ = flow_problem(8, seed=21, feasible=True)
        r = solve_vn(problem, no_stop(np.zeros(problem.coupling.n_global), max_iter=150))
        objs = [t.objective for t in r.trace]
        for a, b in zip(objs, objs[1:]):
            assert b <= a + 1e-10


class TestDykstra:
    def test_feasible_converges_to_projection_of_start(self, pair_feasible):
        r = solve_dykstra(pair_feasible, no_stop([10.0], max_iter=200))
        assert r.final_v[0] == pytest.approx(2.0, abs=1e-9)

    def test_infeasible_displacement_limit(self, pair_infeasible):
        r = solve_dykstra(pair_infeasible, no_stop([10.0]))
        assert r.trace[-1].displacement == pytest.approx(np.sqrt(0.5), abs=1e-6)

    def test_single_agent_projects_once(self):
        c = build_coupling([{0, 1}], 2)
        sets = (Box(np.zeros(2), np.ones(2)),)
        r = solve_dykstra(FeasibilityProblem(c, sets), SolverConfig(x0=np.array([5.0, -3.0])))
        assert r.status is SolveStatus.FEASIBLE and r.iterations == 1
        assert r.final_v == pytest.approx([1.0, 0.0])


class TestMPA:
    def test_equals_vn_on_shared_scalar(self, pair_infeasible):
        for k in (1, 5, 30):
            cfg = no_stop([10.0], max_iter=k)
            assert solve_mpa(pair_infeasible, cfg).final_v == pytest.approx(
                solve_vn(pair_infeasible, cfg).final_v, abs=1e-12
            )

    def test_single_affine_set_one_step(self):
        c = build_coupling([{0, 1}], 2)
        sets = (Hyperplane(np.array([1.0, 1.0]), 1.0),)
        r = solve_mpa(FeasibilityProblem(c, sets), SolverConfig(x0=np.array([2.0, 2.0])))
        assert r.status is SolveStatus.FEASIBLE and r.iterations == 1

    def test_geometric_distance_decay_on_feasible_instance(self):
        inst, problem, _ = flow_problem(8, seed=22, feasible=True)
        r = solve_mpa(problem, no_stop(np.zeros(problem.coupling.n_global), max_iter=400))
        tv = np.array([t.t_v for t in r.trace])
        tv = tv[tv > 1e-12]
        k = np.arange(1, tv.size + 1)
        slope = np.polyfit(k, np.log(tv), 1)[0]
        assert slope < 0

    def test_invalid_weights(self, pair_feasible):
        with pytest.raises(ValueError):
            solve_mpa(pair_feasible, SolverConfig(alpha_weights=np.array([0.5, 0.6])))
        with pytest.raises(ValueError):
            solve_mpa(pair_feasible, SolverConfig(alpha_weights=np.array([1.5, -0.5])))


class TestEquivalenceIdentity:
    def test_fb_equals_vn_on_random_flow_instances(self):
        # unit step and unit relaxation reduce the splitting to pure
        # alternating projections; iterates agree to the last bit
        from cfpsplit.solvers import _ENGINES, _DirectNet

        for seed in range(20):
            inst, problem, _ = flow_problem(int(8 + seed % 8), seed=seed, feasible=bool(seed % 2))
            cfg = SolverConfig(x0=np.zeros(problem.coupling.n_global))
            fb = _ENGINES["fb"](problem, cfg, _DirectNet(problem.coupling))
            vn = _ENGINES["vn"](problem, cfg, _DirectNet(problem.coupling))
            net_fb, net_vn = _DirectNet(problem.coupling), _DirectNet(problem.coupling)
            for k in range(1, 101):
                fb.advance(k, net_fb)
                vn.advance(k, net_vn)
                assert np.max(np.abs(fb.v - vn.v)) <= 1e-12


class TestReportInvariants:
    @pytest.mark.parametrize("alg", ALGORITHMS)
    def test_feasible_report_satisfies_sets_and_consensus(self, alg):
        inst, problem, _ = flow_problem(8, seed=31, feasible=True)
        r = solve(problem, SolverConfig(algorithm=alg, max_iter=100_000))
        assert r.status is SolveStatus.FEASIBLE
        c = problem.coupling
        for s, sl in zip(problem.sets, c.slices):
            assert s.dist(r.final_S[sl]) <= 1e-6 + 1e-9
        assert consensus_residual(r.final_S, c) <= 1e-6 + 1e-9

    def test_trace_fields(self, pair_infeasible):
        r = solve_fb(pair_infeasible, SolverConfig(x0=np.array([4.0])))
        for t in r.trace:
            assert t.objective >= 0 and t.t_v >= 0 and t.messages >= 0
        assert np.all(np.isinf(r.trace[0].per_agent_rc))
        assert r.total_messages == sum(t.messages for t in r.trace)

    def test_determinism_bit_identical(self):
        inst, problem, _ = flow_problem(9, seed=17, feasible=True)
        cfg = SolverConfig(algorithm="falm", max_iter=500)
        r1, r2 = solve(problem, cfg), solve(problem, cfg)
        assert r1.iterations == r2.iterations
        for a, b in zip(r1.trace, r2.trace):
            assert a.objective == b.objective
            assert a.t_v == b.t_v
            assert np.array_equal(a.per_agent_rc, b.per_agent_rc)
        assert np.array_equal(r1.final_v, r2.final_v)

    def test_max_iter_status(self, pair_infeasible):
        r = solve_vn(pair_infeasible, no_stop([10.0], max_iter=7))
        assert r.status is SolveStatus.MAX_ITER and r.iterations == 7


class TestEnvelopes:
    def test_fb_objective_envelope_on_feasible_instances(self):
        from cfpsplit.solvers import run_iterates

        for seed in (41, 42):
            inst, problem, _ = flow_problem(7, seed=seed, feasible=True)
            x0 = np.zeros(problem.coupling.n_global)
            cfg = no_stop(x0, max_iter=400)
            r = solve_fb(problem, cfg)
            ref = run_iterates(problem, SolverConfig(x0=x0), 20_000)
            S0 = scatter(x0, problem.coupling)
            bound0 = float(np.dot(S0 - ref, S0 - ref))
            for t in r.trace:
                assert t.objective <= bound0 / (2 * t.k) + 1e-8
