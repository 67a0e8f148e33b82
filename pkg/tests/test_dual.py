import numpy as np
import pytest

from sdquant.cells import power_partition, tie_weights
from sdquant.cost import CostSpec
from sdquant.density import build_uniform_box, coarsen, sample_points
from sdquant.dual import SolverOptions, default_mass_tol, dual_objective, solve_dual


class TestObjective:
    def test_single_point(self, unit_interval):
        v = dual_objective(unit_interval, [0.5], [0.0])
        assert v == pytest.approx(1 / 12, abs=1e-8)

    def test_two_points_split_at_half(self, unit_interval):
        assert dual_objective(unit_interval, [0.0, 1.0], [0.0, 0.0]) == pytest.approx(1 / 12, abs=1e-8)

    @pytest.mark.parametrize("k", [-1.0, 0.5, 3.0])
    def test_shift_invariance(self, mixture64, rng, k):
        Y = rng.uniform(-0.6, 0.6, (5, 2))
        w = rng.normal(0, 0.05, 5)
        assert dual_objective(mixture64, Y, w + k) == pytest.approx(dual_objective(mixture64, Y, w), abs=1e-12)

    def test_concave_along_segments(self, mixture64, rng):
        Y = rng.uniform(-0.6, 0.6, (6, 2))
        for _ in range(10):
            w1, w2 = rng.normal(0, 0.1, (2, 6))
            t = rng.random()
            mid = dual_objective(mixture64, Y, t * w1 + (1 - t) * w2)
            ends = t * dual_objective(mixture64, Y, w1) + (1 - t) * dual_objective(mixture64, Y, w2)
            assert mid >= ends - 1e-10

    def test_relation_to_half_dual(self, coarse_interval):
        # with uniform target the objective is twice the half-scaled one
        Y, w = [0.1, 0.7], [0.02, -0.02]
        v = dual_objective(coarse_interval, Y, w)
        x, m = coarse_interval.centers[:, 0], coarse_interval.masses
        half = 0.5 * np.sum(m * np.minimum((x - 0.1) ** 2 - 0.02, (x - 0.7) ** 2 + 0.02)) + 0.5 * (0.02 - 0.02) / 2
        assert v == pytest.approx(2 * half, abs=1e-13)


class TestSolve:
    def test_symmetric_weights(self, unit_interval):
        rep = solve_dual(unit_interval, [0.0, 1.0], target=[0.5, 0.5])
        assert rep.converged
        np.testing.assert_allclose(rep.w, [0.0, 0.0], atol=1e-9)
        np.testing.assert_allclose(rep.masses, [0.5, 0.5], atol=1e-12)
        assert rep.value == pytest.approx(1 / 12, abs=1e-8)

    def test_asymmetric_weights(self, unit_interval):
        rep = solve_dual(unit_interval, [0.0, 1.0], target=[0.75, 0.25])
        assert rep.converged
        np.testing.assert_allclose(rep.w, [0.25, -0.25], atol=1e-4)
        np.testing.assert_allclose(rep.masses, [0.75, 0.25], atol=1e-12)
        assert rep.w.mean() == pytest.approx(0.0, abs=1e-15)

    def test_single_point(self, unit_interval):
        rep = solve_dual(unit_interval, [0.3], target=[1.0])
        assert rep.converged and rep.w[0] == 0.0
        assert rep.masses[0] == pytest.approx(1.0, abs=1e-12)

    def test_first_zero_anchor(self, mixture64):
        Y = sample_points(mixture64, 6, seed=2)
        rep = solve_dual(mixture64, Y, opts=SolverOptions(anchor="first_zero"))
        assert rep.w[0] == 0.0

    def test_inactive_weights_zero(self, coarse_interval):
        Y = [0.2, 0.2, 0.8]
        rep = solve_dual(coarse_interval, Y, target=tie_weights(Y))
        assert rep.w[1] == 0.0 and rep.masses[1] == 0.0
        np.testing.assert_allclose(rep.masses, [2 / 3, 0, 1 / 3], atol=1e-12)
        assert rep.w[[0, 2]].mean() == pytest.approx(0.0, abs=1e-15)

    def test_residuals_sum_to_zero(self, mixture64):
        Y = sample_points(mixture64, 9, seed=5)
        rep = solve_dual(mixture64, Y)
        assert rep.converged
        assert abs(rep.mass_residuals.sum()) <= 1e-12
        assert rep.max_residual <= default_mass_tol(mixture64)

    def test_ascent_history_monotone(self, mixture64):
        Y = sample_points(mixture64, 8, seed=9)
        rep = solve_dual(mixture64, Y)
        h = np.array([e["value"] for e in rep.history])
        assert np.all(np.diff(h) >= -1e-12)

    def test_hard_cells_near_target(self, mixture128):
        Y = sample_points(mixture128, 10, seed=1)
        rep = solve_dual(mixture128, Y, opts=SolverOptions(mass_tol=1e-10))
        assert rep.converged and rep.max_residual <= 1e-10
        part = power_partition(mixture128, Y, rep.w)
        assert np.max(np.abs(part.masses - 0.1)) <= 2 * mixture128.masses.max() * 10

    def test_warm_start_reuses_weights(self, mixture64):
        Y = sample_points(mixture64, 8, seed=4)
        cold = solve_dual(mixture64, Y)
        warm = solve_dual(mixture64, Y, w0=cold.w)
        assert warm.iterations <= cold.iterations
        assert warm.value == pytest.approx(cold.value, abs=1e-12)

    def test_value_is_dual_objective_at_w(self, mixture64):
        Y = sample_points(mixture64, 5, seed=0)
        rep = solve_dual(mixture64, Y)
        assert rep.value == pytest.approx(dual_objective(mixture64, Y, rep.w), abs=1e-12)

    def test_far_point_cannot_capture_mass(self):
        d = build_uniform_box(0.0, 1.0, 50)
        # with an L1-type bounded cost, the outlying point can never beat the others
        cost = CostSpec("custom", evaluator=lambda x, y: np.minimum(np.abs(x - y).sum(axis=-1), 1.0), vectorized=True)
        rep = solve_dual(d, [0.5, 100.0], cost, target=[0.5, 0.5], opts=SolverOptions(max_iter=200, polish=False))
        assert rep.converged is False or rep.max_residual > 0

    @pytest.mark.parametrize("target", [[0.5, 0.6], [1.2, -0.2], [1.0]])
    def test_target_validation(self, coarse_interval, target):
        with pytest.raises(ValueError):
            solve_dual(coarse_interval, [0.2, 0.7], target=target)

    def test_p_power_cost(self, coarse_interval):
        rep = solve_dual(coarse_interval, [0.0, 1.0], CostSpec("p_power", p=1.0), target=[0.5, 0.5])
        assert rep.converged
        assert rep.value == pytest.approx(0.25, abs=1e-6)

    def test_lower_bound_against_a_coupling(self):
        d = coarsen(build_uniform_box((0, 0), (1, 1), (28, 28)), 4)
        Y = np.array([[0.1, 0.2], [0.7, 0.3], [0.5, 0.9], [0.3, 0.6]])
        rep = solve_dual(d, Y)
        # the hard Voronoi assignment rescaled to the marginals is one feasible coupling
        C = ((d.centers[:, None] - Y[None]) ** 2).sum(-1)
        lam = np.full(4, 0.25)
        # product coupling
        assert rep.value <= float(d.masses @ C @ lam) + 1e-12
