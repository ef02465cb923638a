import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from klreg.model import DenseOperator, DiagonalOperator, polynomial_operator
from klreg.penalty import PowerNorm, QuadraticNorm
from klreg.solver import (
    SolverError,
    TikhonovProblem,
    dual_objective,
    objective_gap,
    solve,
    tikhonov_objective,
)

seeds = st.integers(0, 2**32 - 1)


def grid_minimum(prob, alpha, step=1e-3, half=2.0):
    """Dense grid search of T_alpha over [-2, 2]^2."""
    u = np.arange(-half, half + step / 2, step)
    best, arg = np.inf, None
    for x0 in np.array_split(u, 40):
        X0, X1 = np.meshgrid(x0, u, indexing="ij")
        pts = np.stack([X0.ravel(), X1.ravel()], axis=1)
        if isinstance(prob.A, DiagonalOperator):
            ax = pts * prob.A.singular_values
        else:
            ax = pts @ prob.A.matrix.T
        r = ax - prob.y_obs
        q = prob.J.q
        vals = 0.5 * np.sum(r * r, axis=1) + alpha * np.sum(np.abs(pts) ** q, axis=1) / q
        i = int(np.argmin(vals))
        if vals[i] < best:
            best, arg = float(vals[i]), pts[i]
    return best, arg


def fixture_problem(J=None):
    return TikhonovProblem(DiagonalOperator([1.0, 0.5]), J or QuadraticNorm(), np.array([1.0, 1.0]))


def test_fixture_solution():
    sol = solve(fixture_problem(), 0.5)
    assert np.allclose(sol.x_alpha, [2 / 3, 2 / 3], rtol=1e-15)


@pytest.mark.parametrize("J", [QuadraticNorm(), PowerNorm(1.5), PowerNorm(1.2)])
def test_brute_force_two_dimensional(J):
    prob = fixture_problem(J)
    for alpha in (0.1, 0.5, 2.0):
        sol = solve(prob, alpha)
        best, arg = grid_minimum(prob, alpha)
        assert sol.objective <= best + 1e-12
        assert np.allclose(sol.x_alpha, arg, atol=2e-3)


def test_dense_matches_diagonal_and_brute_force():
    M = np.array([[1.0, 0.3], [0.2, 0.6]])
    prob = TikhonovProblem(DenseOperator(M), QuadraticNorm(), np.array([0.7, -0.4]))
    sol = solve(prob, 0.3)
    direct = np.linalg.solve(M.T @ M + 0.3 * np.eye(2), M.T @ prob.y_obs)
    assert np.allclose(sol.x_alpha, direct, rtol=1e-13)
    best, _ = grid_minimum(prob, 0.3)
    assert sol.objective <= best + 1e-12


def test_dense_rectangular_residual_outside_range():
    M = np.array([[1.0], [0.0]])
    prob = TikhonovProblem(DenseOperator(M), QuadraticNorm(), np.array([1.0, 2.0]))
    sol = solve(prob, 1.0)
    assert sol.x_alpha == pytest.approx([0.5])
    assert sol.residual_norm == pytest.approx(np.linalg.norm([0.5, 2.0]), rel=1e-14)


def test_unsupported_pairs():
    prob = TikhonovProblem(DenseOperator(np.eye(2)), PowerNorm(1.5), np.ones(2))
    with pytest.raises(NotImplementedError):
        solve(prob, 1.0)
    with pytest.raises(ValueError):
        solve(fixture_problem(), 0.0)


def test_solution_bookkeeping():
    prob = fixture_problem(PowerNorm(1.5))
    sol = solve(prob, 0.2)
    r = prob.A.apply(sol.x_alpha) - prob.y_obs
    assert sol.residual_norm == pytest.approx(np.linalg.norm(r), rel=1e-12)
    assert sol.objective == pytest.approx(0.5 * sol.residual_norm**2 + 0.2 * sol.penalty_value, rel=1e-12)
    assert sol.objective == pytest.approx(tikhonov_objective(prob, 0.2, sol.x_alpha), rel=1e-12)
    assert set(sol.to_dict()) == {"alpha", "x_alpha", "objective", "residual_norm", "penalty_value", "dual_z"}


def test_problem_consistency_check():
    A = DiagonalOperator([1.0, 0.5])
    with pytest.raises(ValueError):
        TikhonovProblem(A, QuadraticNorm(), np.array([1.0, 1.0]), x_true=np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        TikhonovProblem(A, QuadraticNorm(), np.ones(3))
    prob = TikhonovProblem.from_solution(A, QuadraticNorm(), [1.0, 0.0])
    assert np.array_equal(prob.y_obs, [1.0, 0.0])
    noisy = prob.with_data(np.array([1.0, 0.1]), 0.1)
    assert np.array_equal(noisy.noise_free().y_obs, prob.y_obs)


def test_large_alpha_shrinks_monotonically():
    prob = TikhonovProblem(polynomial_operator(50), QuadraticNorm(), np.ones(50))
    norms = [np.linalg.norm(solve(prob, a).x_alpha) for a in np.logspace(0, 4, 9)]
    assert all(a > b for a, b in zip(norms, norms[1:]))
    assert norms[-1] < 1e-3


@pytest.mark.parametrize("J", [QuadraticNorm(), PowerNorm(1.5)])
def test_noise_free_convergence(J):
    A = polynomial_operator(100)
    w = (-1.0) ** np.arange(100) / np.sqrt(np.arange(1, 101))
    xt = A.power_AstarA(0.25, w / np.linalg.norm(w))
    prob = TikhonovProblem.from_solution(A, J, xt)
    errs = [np.linalg.norm(solve(prob, a).x_alpha - xt) for a in np.logspace(0, -8, 9)]
    assert all(a > b for a, b in zip(errs, errs[1:]))


@given(seeds, st.sampled_from([2.0, 1.7, 1.3]))
def test_monotonicity_in_alpha(seed, q):
    rng = np.random.default_rng(seed)
    J = QuadraticNorm() if q == 2.0 else PowerNorm(q)
    prob = TikhonovProblem(polynomial_operator(20), J, rng.standard_normal(20))
    sols = [solve(prob, a) for a in np.logspace(-4, 2, 13)]
    for s0, s1 in zip(sols, sols[1:]):
        assert s1.residual_norm >= s0.residual_norm * (1 - 1e-12)
        assert s1.penalty_value <= s0.penalty_value * (1 + 1e-12)


@given(seeds, st.sampled_from([2.0, 1.5, 1.1]), st.floats(1e-4, 1e1))
def test_optimality_condition(seed, q, alpha):
    rng = np.random.default_rng(seed)
    J = QuadraticNorm() if q == 2.0 else PowerNorm(q)
    prob = TikhonovProblem(polynomial_operator(15), J, rng.standard_normal(15))
    sol = solve(prob, alpha)
    x = sol.x_alpha
    g = prob.A.adjoint(prob.A.apply(x) - prob.y_obs) + alpha * J.subgradient(x)
    assert np.linalg.norm(g) <= 1e-10 * max(1.0, np.linalg.norm(prob.A.adjoint(prob.y_obs)))


@pytest.mark.parametrize("J", [QuadraticNorm(), PowerNorm(1.5)])
def test_minimality_against_random_points(J):
    rng = np.random.default_rng(11)
    prob = TikhonovProblem(polynomial_operator(10), J, rng.standard_normal(10))
    sol = solve(prob, 0.05)
    for _ in range(1000):
        x = sol.x_alpha + rng.standard_normal(10) * 10.0 ** rng.uniform(-6, 0)
        assert sol.objective < tikhonov_objective(prob, 0.05, x)


def test_gap_examples():
    prob = TikhonovProblem.from_solution(DiagonalOperator([1.0, 0.5]), QuadraticNorm(), [1.0, 0.0])
    sol = solve(prob, 1.0)
    assert objective_gap(prob, 1.0, sol.x_alpha, sol) == 0.0
    # closed form: x_alpha = (1/2, 0), gap = 0.5*0.25 + 0.5*0.25
    assert objective_gap(prob, 1.0, prob.x_true) == pytest.approx(0.25, rel=1e-15)
    best, _ = grid_minimum(prob, 1.0)
    direct = tikhonov_objective(prob, 1.0, prob.x_true) - best
    assert objective_gap(prob, 1.0, prob.x_true) == pytest.approx(direct, abs=1e-6)


@given(seeds, st.floats(1e-3, 1e1))
def test_gap_quadratic_identity(seed, alpha):
    rng = np.random.default_rng(seed)
    prob = TikhonovProblem(polynomial_operator(12), QuadraticNorm(), rng.standard_normal(12))
    x = rng.standard_normal(12)
    sol = solve(prob, alpha)
    h = x - sol.x_alpha
    expect = 0.5 * np.sum(prob.A.apply(h) ** 2) + 0.5 * alpha * np.dot(h, h)
    assert objective_gap(prob, alpha, x, sol) == pytest.approx(expect, rel=1e-12)
    direct = tikhonov_objective(prob, alpha, x) - sol.objective
    assert objective_gap(prob, alpha, x, sol) == pytest.approx(direct, rel=1e-8, abs=1e-12)


@given(seeds, st.floats(1e-3, 1e1))
def test_gap_power_norm_matches_subtraction(seed, alpha):
    rng = np.random.default_rng(seed)
    prob = TikhonovProblem(polynomial_operator(12), PowerNorm(1.5), rng.standard_normal(12))
    x = rng.standard_normal(12)
    sol = solve(prob, alpha)
    direct = tikhonov_objective(prob, alpha, x) - sol.objective
    assert objective_gap(prob, alpha, x, sol) == pytest.approx(direct, rel=1e-8, abs=1e-12)


def source_truth(n=60, mu=0.25):
    A = polynomial_operator(n)
    w = (-1.0) ** np.arange(n) / np.sqrt(np.arange(1, n + 1))
    return A, A.power_AstarA(mu, w / np.linalg.norm(w))


@pytest.mark.parametrize("J", [QuadraticNorm(), PowerNorm(1.5), PowerNorm(1.8)])
@pytest.mark.parametrize("alpha", [1e-6, 1e-3, 1.0])
def test_strong_duality(J, alpha):
    A, xt = source_truth()
    prob = TikhonovProblem.from_solution(A, J, xt)
    sol = solve(prob, alpha)
    lhs = dual_objective(prob, alpha, sol.dual_z)
    rhs = objective_gap(prob, alpha, xt, sol) / alpha
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-300)


@pytest.mark.parametrize("J", [QuadraticNorm(), PowerNorm(1.5)])
def test_zero_certificate(J):
    A, xt = source_truth()
    prob = TikhonovProblem.from_solution(A, J, xt)
    xs = J.subgradient(xt)
    val = dual_objective(prob, 0.3, np.zeros(A.shape[0]))
    assert val == pytest.approx(np.dot(xt, xs) - J.conjugate(xs), rel=1e-12)
    assert val == pytest.approx(J(xt), rel=1e-12)
    assert val >= 0


@pytest.mark.parametrize("J", [QuadraticNorm(), PowerNorm(1.5)])
def test_certificate_scaling_minimum(J):
    A, xt = source_truth()
    prob = TikhonovProblem.from_solution(A, J, xt)
    alpha = 1e-3
    z = solve(prob, alpha).dual_z
    ts = np.linspace(0, 2, 201)
    vals = [dual_objective(prob, alpha, t * z) for t in ts]
    assert ts[int(np.argmin(vals))] == pytest.approx(1.0)


def test_dual_is_upper_bound_for_any_certificate():
    A, xt = source_truth()
    prob = TikhonovProblem.from_solution(A, PowerNorm(1.5), xt)
    alpha = 1e-2
    best = objective_gap(prob, alpha, xt) / alpha
    rng = np.random.default_rng(5)
    z = solve(prob, alpha).dual_z
    for _ in range(200):
        assert dual_objective(prob, alpha, z + 0.1 * rng.standard_normal(z.size)) >= best


def test_batch_solves_schedule_independent():
    from concurrent.futures import ThreadPoolExecutor

    A, xt = source_truth()
    prob = TikhonovProblem.from_solution(A, PowerNorm(1.5), xt)
    alphas = np.logspace(-6, 0, 16)
    serial = [solve(prob, a).x_alpha for a in alphas]
    with ThreadPoolExecutor(4) as ex:
        parallel = list(ex.map(lambda a: solve(prob, a).x_alpha, alphas[::-1]))[::-1]
    for s, p in zip(serial, parallel):
        assert np.array_equal(s, p)


def test_solver_error_is_runtime_error():
    assert issubclass(SolverError, RuntimeError)
