import numpy as np
import pytest

from insr.optim import AdamState, PlateauSchedule, SolverAbort, adam_step, solve


class TestAdam:
    def test_zero_gradient_no_move(self):
        state = AdamState.zeros(4)
        w = np.array([1.0, -2.0, 0.5, 3.0])
        out = adam_step(state, 1e-2, np.zeros(4), w)
        np.testing.assert_array_equal(out, w)

    def test_constant_gradient_limit_is_signed_lr(self):
        state = AdamState.zeros(2)
        w = np.zeros(2)
        g = np.array([3.0, -0.25])
        for _ in range(400):
            w_new = adam_step(state, 1e-3, g, w)
            step = w_new - w
            w = w_new
        np.testing.assert_allclose(step, -np.sign(g) * 1e-3, rtol=1e-6)

    def test_quadratic_converges(self):
        rng = np.random.default_rng(0)
        target = rng.standard_normal(10)
        w = np.zeros(10)
        state = AdamState.zeros(10)
        for _ in range(5000):
            w = adam_step(state, 1e-2, 2.0 * (w - target), w)
        assert np.linalg.norm(w - target) < 1e-4

    def test_non_finite_gradient_aborts(self):
        state = AdamState.zeros(2)
        with pytest.raises(SolverAbort):
            adam_step(state, 1e-3, np.array([np.nan, 0.0]), np.zeros(2))


class TestPlateauSchedule:
    def test_drop_after_exact_patience(self):
        sched = PlateauSchedule(lr0=1e-4, patience=5, iter_max=100)
        sched.observe(1.0)  # establishes best
        for k in range(4):
            assert not sched.observe(1.0)
            assert sched.lr == 1e-4
        sched.observe(1.0)  # fifth stalled iteration
        assert sched.lr == pytest.approx(1e-5)

    def test_lr_never_increases_and_stops_at_min(self):
        sched = PlateauSchedule(lr0=1e-4, patience=1, lr_min=1e-8, iter_max=100)
        sched.observe(1.0)
        lrs = [sched.lr]
        stopped = False
        for _ in range(20):
            stopped = sched.observe(1.0)
            lrs.append(sched.lr)
            if stopped:
                break
        assert stopped
        assert all(b <= a for a, b in zip(lrs, lrs[1:]))
        assert min(lrs) >= 1e-8 * (1 - 1e-12)

    def test_improvement_resets_stall(self):
        sched = PlateauSchedule(lr0=1.0, patience=3, iter_max=100)
        sched.observe(1.0)
        sched.observe(1.0)
        sched.observe(0.5)  # improvement
        sched.observe(0.5)
        sched.observe(0.5)
        assert sched.lr == 1.0
        sched.observe(0.5)
        assert sched.lr == pytest.approx(0.1)


class TestSolve:
    def test_objective_independent_of_theta(self):
        theta0 = np.array([1.0, 2.0])

        def objective(theta, batch):
            return 7.0, np.zeros(2)

        out = solve(
            objective,
            theta0,
            PlateauSchedule(lr0=1e-3, patience=3, iter_max=50),
            lambda: None,
        )
        np.testing.assert_array_equal(out, theta0)

    def test_quadratic_solve(self):
        target = np.array([0.3, -0.7, 1.1])

        def objective(theta, batch):
            diff = theta - target
            return float(diff @ diff), 2.0 * diff

        out = solve(
            objective,
            np.zeros(3),
            PlateauSchedule(lr0=1e-2, patience=200, iter_max=6000),
            lambda: None,
        )
        assert np.linalg.norm(out - target) < 1e-3

    def test_nan_loss_aborts_with_iteration(self):
        def objective(theta, batch):
            return np.nan, np.zeros(1)

        with pytest.raises(SolverAbort) as err:
            solve(
                objective,
                np.zeros(1),
                PlateauSchedule(lr0=1e-3, iter_max=10),
                lambda: None,
            )
        assert err.value.iteration == 0

    def test_loss_log_written(self, tmp_path):
        def objective(theta, batch):
            return float(theta @ theta), 2.0 * theta

        path = tmp_path / "loss.csv"
        solve(
            objective,
            np.ones(2),
            PlateauSchedule(lr0=1e-2, patience=5, iter_max=20),
            lambda: None,
            log_path=path,
        )
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "iter,lr,loss"
        assert len(lines) == 21

    def test_fresh_batch_each_iteration(self):
        seen = []

        def sampler():
            seen.append(len(seen))
            return seen[-1]

        def objective(theta, batch):
            return 1.0, np.zeros(1)

        solve(
            objective,
            np.zeros(1),
            PlateauSchedule(lr0=1e-3, patience=100, iter_max=7),
            sampler,
        )
        assert seen == list(range(7))
