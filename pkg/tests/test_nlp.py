import numpy as np
import pytest

from lfopf.formulation import ControlMode, assemble
from lfopf.nlp import (
    AllStartsFailedError,
    NlpInstance,
    SolveStatus,
    SolverOptions,
    check_derivatives,
    multistart,
    solve,
    verify_kkt,
)


def quad_bound():
    # min x^2 s.t. x >= 1  ->  x* = 1
    return NlpInstance(n=1, objective=lambda x: x[0] ** 2,
                       gradient=lambda x: np.array([2.0 * x[0]]),
                       lb=np.array([1.0]), x0=np.array([3.0]))


def quad_equality():
    # min (x-2)^2 + (y-1)^2 s.t. x + y = 1; the Lagrangian stationary point
    # is the projection of (2, 1) onto the constraint: (1, 0), objective 2
    return NlpInstance(
        n=2,
        objective=lambda x: (x[0] - 2.0) ** 2 + (x[1] - 1.0) ** 2,
        gradient=lambda x: np.array([2.0 * (x[0] - 2.0), 2.0 * (x[1] - 1.0)]),
        equalities=lambda x: np.array([x[0] + x[1] - 1.0]),
        eq_jacobian=lambda x: np.array([[1.0, 1.0]]),
        x0=np.array([0.0, 0.0]))


def linear_redundant():
    # min -x s.t. x <= 3 and x^2 <= 9 -> x* = 3
    return NlpInstance(
        n=1, objective=lambda x: -x[0], gradient=lambda x: np.array([-1.0]),
        inequalities=lambda x: np.array([x[0] - 3.0, x[0] ** 2 - 9.0]),
        ineq_jacobian=lambda x: np.array([[1.0], [2.0 * x[0]]]),
        x0=np.array([0.5]))


CONVEX_SET = [
    (quad_bound, 1.0),
    (quad_equality, 2.0),
    (linear_redundant, -3.0),
]


class TestSolve:
    @pytest.mark.parametrize("factory,expected", CONVEX_SET)
    def test_convex_set_matches_closed_form(self, factory, expected):
        res = solve(factory())
        assert res.status is SolveStatus.OPTIMAL
        assert res.objective == pytest.approx(expected, rel=1e-7, abs=1e-7)

    def test_active_bound(self):
        res = solve(quad_bound())
        assert res.x[0] == pytest.approx(1.0, abs=1e-7)

    def test_equality_solution_point(self):
        res = solve(quad_equality())
        assert res.x[0] == pytest.approx(1.0, abs=1e-7)
        assert res.x[1] == pytest.approx(0.0, abs=1e-7)

    def test_redundant_constraints_boundary(self):
        res = solve(linear_redundant())
        assert res.x[0] == pytest.approx(3.0, abs=1e-6)

    def test_determinism_bit_identical(self):
        a = solve(quad_equality())
        b = solve(quad_equality())
        assert a.iterations == b.iterations
        assert a.objective == b.objective
        assert np.array_equal(a.x, b.x)

    def test_barrier_monotone(self):
        res = solve(linear_redundant())
        path = res.barrier_path
        assert all(m1 <= m0 for m0, m1 in zip(path, path[1:]))

    @pytest.mark.parametrize("factory,_", CONVEX_SET)
    def test_kkt_certificate(self, factory, _):
        inst = factory()
        res = solve(inst)
        assert res.status is SolveStatus.OPTIMAL
        cert = verify_kkt(inst, res)
        assert cert["stationarity"] < 1e-6
        assert cert["eq"] < 1e-8
        assert cert["ineq"] < 1e-7
        assert cert["bound"] < 1e-8
        assert cert["comp"] < 1e-6
        assert cert["sign"] < 1e-9

    def test_iteration_limit_status(self):
        res = solve(quad_equality(), SolverOptions(max_iter=0))
        assert res.status is SolveStatus.ITERATION_LIMIT

    def test_infeasible_problem_detected(self):
        inst = NlpInstance(
            n=1, objective=lambda x: x[0], gradient=lambda x: np.array([1.0]),
            equalities=lambda x: np.array([x[0] - 5.0]),
            eq_jacobian=lambda x: np.array([[1.0]]),
            lb=np.array([0.0]), ub=np.array([1.0]), x0=np.array([0.5]))
        res = solve(inst)
        assert res.status in (SolveStatus.LOCALLY_INFEASIBLE,
                              SolveStatus.ITERATION_LIMIT)
        assert res.status is not SolveStatus.OPTIMAL

    def test_fixed_variable_bounds(self):
        # lb == ub pins the variable through an internal equality row
        inst = NlpInstance(
            n=2, objective=lambda x: (x[0] - 2.0) ** 2 + x[1] ** 2,
            gradient=lambda x: np.array([2.0 * (x[0] - 2.0), 2.0 * x[1]]),
            lb=np.array([1.0, -5.0]), ub=np.array([1.0, 5.0]),
            x0=np.array([1.0, 3.0]))
        res = solve(inst)
        assert res.status is SolveStatus.OPTIMAL
        assert res.x[0] == pytest.approx(1.0, abs=1e-10)
        assert res.x[1] == pytest.approx(0.0, abs=1e-7)

    def test_bfgs_mode_on_convex_problem(self):
        res = solve(quad_equality(), SolverOptions(hessian="bfgs"))
        assert res.status is SolveStatus.OPTIMAL
        assert res.objective == pytest.approx(2.0, rel=1e-6)

    def test_gn_mode_on_convex_problem(self):
        res = solve(linear_redundant(), SolverOptions(hessian="gn"))
        assert res.status is SolveStatus.OPTIMAL
        assert res.objective == pytest.approx(-3.0, rel=1e-6)


class TestCheckDerivatives:
    def test_correct_quadratic(self):
        assert check_derivatives(quad_equality()) < 1e-7

    def test_planted_gradient_fault(self):
        inst = NlpInstance(
            n=2,
            objective=lambda x: (x[0] - 2.0) ** 2 + (x[1] - 1.0) ** 2,
            gradient=lambda x: np.array([2.0 * (x[0] - 2.0) * 1.1,
                                         2.0 * (x[1] - 1.0)]),
            x0=np.array([1.0, 0.0]))
        assert check_derivatives(inst) >= 0.05

    def test_planted_jacobian_fault(self):
        inst = NlpInstance(
            n=2, objective=lambda x: 0.0, gradient=lambda x: np.zeros(2),
            equalities=lambda x: np.array([x[0] * x[1] - 1.0]),
            eq_jacobian=lambda x: np.array([[x[1] * 1.1, x[0]]]),
            x0=np.array([1.0, 1.0]))
        assert check_derivatives(inst) >= 0.04

    def test_assembled_two_bus_flat_start(self, net2):
        prob = assemble(net2, ControlMode.LFAC_OPF)
        assert check_derivatives(prob) < 1e-6


def test_concurrent_solves_share_one_problem(net3):
    # one assembled problem evaluated by concurrent solver instances
    import concurrent.futures

    prob = assemble(net3, ControlMode.LFAC_OPF)
    with concurrent.futures.ThreadPoolExecutor(max_workers=4) as pool:
        results = list(pool.map(lambda _: solve(prob), range(4)))
    assert all(r.status is SolveStatus.OPTIMAL for r in results)
    objs = {r.objective for r in results}
    iters = {r.iterations for r in results}
    assert len(objs) == 1 and len(iters) == 1


def test_kkt_certificate_on_assembled_opf(net3):
    prob = assemble(net3, ControlMode.LFAC_OPF)
    res = solve(prob)
    assert res.status is SolveStatus.OPTIMAL
    cert = verify_kkt(prob, res)
    assert cert["stationarity"] < 1e-6
    assert cert["eq"] < 1e-7
    assert cert["ineq"] < 1e-7
    assert cert["comp"] < 1e-6
    assert cert["sign"] < 1e-9


class TestMultistart:
    def test_single_start_equals_solve(self):
        inst = quad_equality()
        best, results = multistart(inst, [inst.x0])
        direct = solve(inst)
        assert len(results) == 1
        assert best.objective == direct.objective
        assert best.iterations == direct.iterations

    def test_convex_starts_agree(self):
        inst = quad_equality()
        best, results = multistart(inst, [np.array([0.0, 0.0]),
                                          np.array([5.0, -3.0]),
                                          np.array([-2.0, 2.0])])
        objs = [r.objective for r in results if r.status is SolveStatus.OPTIMAL]
        assert len(objs) == 3
        assert max(objs) - min(objs) < 1e-8 * max(1.0, abs(objs[0]))

    def test_nonconvex_two_basins(self):
        # f(x) = (x^2-1)^2 + 0.3 x has basins near -1 and +1; the left one
        # is lower. Oracle: dense grid argmin.
        def f(x):
            return (x[0] ** 2 - 1.0) ** 2 + 0.3 * x[0]

        def g(x):
            return np.array([4.0 * x[0] * (x[0] ** 2 - 1.0) + 0.3])

        inst = NlpInstance(n=1, objective=f, gradient=g,
                           lb=np.array([-2.0]), ub=np.array([2.0]),
                           x0=np.array([0.0]))
        xs = np.linspace(-2.0, 2.0, 400001)
        brute = xs[np.argmin((xs ** 2 - 1.0) ** 2 + 0.3 * xs)]
        best, results = multistart(inst, [np.array([1.5]), np.array([-1.5])])
        assert best.x[0] == pytest.approx(brute, abs=1e-4)
        basins = sorted(float(r.x[0]) for r in results)
        assert basins[0] < 0.0 < basins[1]  # both basins were actually found

    def test_all_failed_raises(self):
        inst = NlpInstance(
            n=1, objective=lambda x: x[0], gradient=lambda x: np.array([1.0]),
            equalities=lambda x: np.array([x[0] - 5.0]),
            eq_jacobian=lambda x: np.array([[1.0]]),
            lb=np.array([0.0]), ub=np.array([1.0]), x0=np.array([0.5]))
        with pytest.raises(AllStartsFailedError):
            multistart(inst, [np.array([0.2]), np.array([0.8])])

    def test_empty_starts_rejected(self):
        with pytest.raises(ValueError):
            multistart(quad_bound(), [])
