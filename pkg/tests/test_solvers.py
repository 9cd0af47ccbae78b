import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_instance, path3_ls
from decentopt.objectives import LeastSquares, StackedObjective
from decentopt.solvers import (
    DivergenceError,
    StepSchedule,
    StepSizeError,
    corrected_dgd_init,
    corrected_dgd_step,
    dgd_step,
    extra_init,
    extra_step,
    mix,
    run,
    run_extra_iterates,
    schedule_alpha,
)

ONE = np.eye(1)


def scalar_quadratic():
    return StackedObjective([LeastSquares([[1.0]], [0.0])])  # 0.5 x^2


def common_minimizer(n, c):
    return StackedObjective([LeastSquares(np.eye(len(c)), c) for _ in range(n)])


def test_mix_matches_matmul():
    rng = np.random.default_rng(0)
    w, x = rng.standard_normal((7, 7)), rng.standard_normal((7, 3))
    np.testing.assert_allclose(mix(w, x), w @ x, atol=1e-14)


def test_dgd_step_examples():
    w = np.array([[0.5, 0.5, 0.0], [0.5, 0.0, 0.5], [0.0, 0.5, 0.5]])
    c = np.array([1.0, -2.0])
    x = np.tile(c, (3, 1))
    np.testing.assert_array_equal(dgd_step(x, w, 0.3, common_minimizer(3, c)), x)
    assert dgd_step(np.array([[1.0]]), ONE, 0.5, scalar_quadratic())[0, 0] == 0.5
    y = np.random.default_rng(1).standard_normal((3, 2))
    np.testing.assert_array_equal(dgd_step(y, w, 0.0, common_minimizer(3, c)), mix(w, y))


def test_extra_init_examples():
    c = np.array([2.0, 3.0])
    x0 = np.tile(c, (3, 1))
    w = np.full((3, 3), 1.0 / 3)
    s = extra_init(x0, w, 0.4, common_minimizer(3, c))
    np.testing.assert_allclose(s.x_curr, x0, atol=1e-15)
    assert s.k == 0 and s.x_prev is not None
    s = extra_init(np.array([[1.0]]), ONE, 0.5, scalar_quadratic())
    assert s.x_curr[0, 0] == 0.5


def test_run_rejects_step_at_bound():
    inst = path3_ls()
    bound = inst.pair.step_bound(inst.obj.Lf)
    with pytest.raises(StepSizeError):
        run("extra", inst.pair.W, inst.pair.Wt, inst.obj, inst.x0, bound, 5)


def test_extra_scalar_recursion_examples():
    xs = run_extra_iterates(np.array([[1.0]]), ONE, ONE, 0.5, scalar_quadratic(), 3)
    assert [x[0, 0] for x in xs] == [1.0, 0.5, 0.25, 0.125]


@pytest.mark.parametrize("alpha", [0.1, 0.5, 0.9, 1.5])
def test_extra_scalar_matches_hand_recursion(alpha):
    xs = run_extra_iterates(np.array([[1.0]]), ONE, ONE, alpha, scalar_quadratic(), 60)
    a, b = 1.0, 1.0 - alpha
    for k in range(1, 60):
        a, b = b, (2 - alpha) * b - (1 - alpha) * a
        assert abs(xs[k + 1][0, 0] - b) <= 1e-14


def test_extra_fixed_point_at_optimum():
    inst = make_instance("ls", 3)
    x_star = np.tile(inst.x_star, (inst.graph.n, 1))
    g = inst.obj.grad(x_star)
    from decentopt.solvers import ExtraState

    s = ExtraState(x_star.copy(), x_star.copy(), g, 5, inst.alpha)
    out = extra_step(s, inst.pair.W, inst.pair.Wt, inst.obj)
    assert np.max(np.abs(out.x_curr - x_star)) <= 1e-12


def test_extra_converges_on_path_graph():
    inst = path3_ls(seed=1)
    trace = run("extra", inst.pair.W, inst.pair.Wt, inst.obj, inst.x0, inst.alpha, 5000,
                stop=1e-10, x_star=inst.x_star)
    assert trace.status == "converged" and trace.iterations <= 5000
    np.testing.assert_allclose(trace.final(), np.tile(inst.x_star, (3, 1)), atol=1e-8)


def test_gradient_evaluation_economy():
    inst = make_instance("logistic", 2)
    inst.obj.grad_evals = 0
    state = extra_init(inst.x0, inst.pair.W, inst.alpha, inst.obj)
    for k in range(1, 26):
        state = extra_step(state, inst.pair.W, inst.pair.Wt, inst.obj)
        assert inst.obj.grad_evals == k + 1
    trace = run("extra", inst.pair.W, inst.pair.Wt, inst.obj, inst.x0, inst.alpha, 40)
    assert trace.grad_evals == 40


def test_corrected_dgd_first_step_is_dgd():
    inst = make_instance("ls", 4)
    s = corrected_dgd_init(inst.x0, inst.pair.W, inst.pair.Wt, inst.alpha)
    s1 = corrected_dgd_step(s, inst.pair.W, inst.pair.Wt, inst.obj)
    np.testing.assert_array_equal(s1.x, dgd_step(inst.x0, inst.pair.W, inst.alpha, inst.obj))


def test_corrected_dgd_with_equal_matrices_is_dgd():
    inst = make_instance("ls", 5)
    w = inst.pair.W
    s = corrected_dgd_init(inst.x0, w, w, 0.3)
    x = inst.x0
    for _ in range(30):
        s = corrected_dgd_step(s, w, w, inst.obj)
        x = dgd_step(x, w, 0.3, inst.obj)
        np.testing.assert_array_equal(s.x, x)


@settings(max_examples=12, deadline=None)
@given(st.sampled_from(["ls", "huber", "logistic"]), st.integers(0, 10_000))
def test_corrected_dgd_tracks_extra(family, seed):
    inst = make_instance(family, seed)
    w, wt = inst.pair.W, inst.pair.Wt
    xs = run_extra_iterates(inst.x0, w, wt, inst.alpha, inst.obj, 200)
    s = corrected_dgd_init(inst.x0, w, wt, inst.alpha)
    for k in range(1, 201):
        s = corrected_dgd_step(s, w, wt, inst.obj)
        assert np.linalg.norm(s.x - xs[k]) <= 1e-9 * max(1.0, np.linalg.norm(xs[k]))


def test_schedule_examples():
    assert schedule_alpha(StepSchedule("fixed", 0.5276), 17) == 0.5276
    assert schedule_alpha(StepSchedule("power", 1.0, 0.5), 3) == 0.5
    assert schedule_alpha(StepSchedule("power", 1.0, 1 / 3), 0) == 1.0
    assert StepSchedule.for_solver("dgd-1/3", 2.0).exponent == pytest.approx(1 / 3)


def test_run_budget_zero_keeps_initial_record():
    inst = path3_ls()
    trace = run("extra", inst.pair.W, inst.pair.Wt, inst.obj, inst.x0, inst.alpha, 0, x_star=inst.x_star)
    assert trace.iterations == 0 and len(trace.residuals) == 1 and list(trace.iterates) == [0]


def test_run_records_one_entry_per_iterate_and_thins():
    inst = make_instance("ls", 6)
    trace = run("dgd-1/2", inst.pair.W, inst.pair.Wt, inst.obj, inst.x0, 0.5, 25, x_star=inst.x_star, thin=10)
    assert len(trace.alphas) == len(trace.residuals) == 26
    assert sorted(trace.iterates) == [0, 10, 20, 25]
    assert trace.alphas[3] == pytest.approx(0.5 / 2)


def test_dgd_fixed_stalls_while_extra_continues():
    inst = make_instance("ls", 7, n=8, m=1, p=4)
    w, wt = inst.pair.W, inst.pair.Wt
    dgd = run("dgd-fixed", w, wt, inst.obj, inst.x0, inst.alpha, 3000, x_star=inst.x_star)
    ext = run("extra", w, wt, inst.obj, inst.x0, inst.alpha, 3000, x_star=inst.x_star)
    assert dgd.residuals[-1] > 1e-4
    assert abs(dgd.residuals[-1] - dgd.residuals[-500]) < 0.01 * dgd.residuals[-1]
    assert ext.residuals[-1] < 1e-3 * dgd.residuals[-1]


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_reports_iteration():
    inst = make_instance("ls", 8)
    with pytest.raises(DivergenceError) as err:
        run("extra", inst.pair.W, inst.pair.Wt, inst.obj, inst.x0 + 1.0, 1e3, 5000, enforce_bound=False)
    assert err.value.iteration > 0
