import math

import numpy as np
import pytest

from dualsmooth import _kernels, finite, grid, oracles
from dualsmooth.errors import CFLViolation, GridTooCoarseWarning
from dualsmooth.models import DiffusionModel1D, ObservationPath

from conftest import grid_model_with_n


def heat_model(n=64, lo=-5.0, hi=5.0):
    sqrt2 = math.sqrt(2.0)
    return DiffusionModel1D(
        a="zero", sigma=f"const:{sqrt2}", h="zero", nu0="gauss:0,1", x_min=lo, x_max=hi, n=n
    )


def ou_model(n=200, h="linear:1", nu0="gauss:0,1", lo=-6.0, hi=6.0):
    return DiffusionModel1D(a="ou", sigma="const:1", h=h, nu0=nu0, x_min=lo, x_max=hi, n=n)


def flat_observations(T=1.0, N=100):
    return ObservationPath(T=T, N=N, z=np.zeros(N + 1))


class TestOperators:
    def test_interior_laplacian_stencil(self):
        model = heat_model()
        ops = grid.build_grid_operators(model)
        L = ops.generator_matrix()
        dx2 = ops.dx**2
        for i in range(5, 12):
            assert L[i, i - 1] == pytest.approx(1.0 / dx2)
            assert L[i, i] == pytest.approx(-2.0 / dx2)
            assert L[i, i + 1] == pytest.approx(1.0 / dx2)

    def test_kernel_and_conservation(self):
        ops = grid.build_grid_operators(ou_model())
        assert np.max(np.abs(ops.generator_matrix().sum(axis=1))) < 1e-10
        assert np.max(np.abs(ops.adjoint_matrix().sum(axis=0))) < 1e-10

    def test_exact_duality(self):
        ops = grid.build_grid_operators(ou_model(n=80))
        rng = np.random.default_rng(3)
        f = rng.standard_normal(80)
        g = rng.standard_normal(80)
        lhs = np.dot(ops.apply_generator(f), g)
        rhs = np.dot(f, ops.apply_adjoint(g))
        assert lhs == pytest.approx(rhs, rel=1e-13, abs=1e-13)

    def test_ou_stationary_density_in_kernel(self):
        # stationary N(0,1) for a = -x, sigma = sqrt(2); residual is O(dx^2)
        sqrt2 = math.sqrt(2.0)
        res = {}
        for n in (100, 200):
            model = DiffusionModel1D(
                a="ou", sigma=f"const:{sqrt2}", h="zero", nu0="gauss:0,1", x_min=-6.0, x_max=6.0, n=n
            )
            ops = grid.build_grid_operators(model)
            rho = np.exp(-0.5 * ops.x**2) / math.sqrt(2 * math.pi)
            res[n] = np.max(np.abs(ops.apply_adjoint(rho)))
        assert res[200] < 2e-4
        assert res[100] / res[200] > 3.0

    def test_peclet_warning(self):
        model = DiffusionModel1D(
            a="linear:30", sigma="const:1", h="zero", nu0="gauss:0,0.25", x_min=-1.0, x_max=1.0, n=16
        )
        with pytest.warns(GridTooCoarseWarning):
            grid.build_grid_operators(model)

    def test_gradient_exact_on_quadratics(self):
        ops = grid.build_grid_operators(ou_model(n=50))
        g = ops.gradient(ops.x**2)
        np.testing.assert_allclose(g, 2 * ops.x, atol=1e-10)


class TestBackwardFieldPde:
    def test_zero_observation_function(self):
        model = ou_model(h="zero")
        lam = grid.integrate_lambda_backward_pde(model, flat_observations())
        assert np.max(np.abs(lam)) < 1e-9

    def test_decoupled_closed_form(self):
        # vanishing diffusion and drift: d(lam)/dt = x^2/2 pointwise
        model = DiffusionModel1D(
            a="zero", sigma="const:1e-9", h="linear:1", nu0="gauss:0,0.5", x_min=-2.0, x_max=2.0, n=64
        )
        rng = np.random.default_rng(8)
        N = 50
        z = np.concatenate([[0.0], np.cumsum(0.05 * rng.standard_normal(N))])
        obs = ObservationPath(T=1.0, N=N, z=z)
        lam = grid.integrate_lambda_backward_pde(model, obs)
        x = model.grid()
        t = obs.times()
        expected = z[-1] * x[None, :] - 0.5 * x[None, :] ** 2 * (1.0 - t)[:, None]
        np.testing.assert_allclose(lam, expected, atol=1e-10)

    def test_matches_pathwise_reference(self, lg_model, obs_lg, grid_model):
        ref = oracles.lg_pathwise_reference(lg_model, obs_lg)
        ops = grid.build_grid_operators(grid_model)
        lam = grid.integrate_lambda_backward_pde(grid_model, obs_lg, ops=ops)
        window = np.abs(ops.x) <= 4.0
        worst = 0.0
        for k in range(0, obs_lg.N + 1, 25):
            lref = ref.log_value(k, ops.x)
            sel = window & ((lref - lref[window].max()) >= math.log(1e-3))
            worst = max(worst, np.max(np.abs(np.exp(lam[k][sel] - lref[sel]) - 1.0)))
        assert worst < 1e-2

    def test_cfl_violation_when_substeps_forced_low(self, obs_lg):
        model = ou_model(n=800)
        with pytest.raises(CFLViolation):
            grid.integrate_lambda_backward_pde(model, obs_lg, substeps=1)


class TestForwardFieldPde:
    def test_discrete_stationary_is_fixed_point(self):
        model = ou_model(n=100, h="zero")
        ops = grid.build_grid_operators(model)
        # stationary of the flux-form operator: zero flux through every face
        # gives the neighbor ratio recursion, accurate in relative terms even
        # deep in the tails (an eigensolver would not be)
        n = ops.n
        logrho = np.zeros(n)
        for i in range(n - 1):
            logrho[i + 1] = logrho[i] + np.log(ops.lo_dag[i + 1] / ops.up_dag[i])
        out = _kernels.grid_pathwise_sweep(
            ops.lo_dag, ops.d0_dag, ops.up_dag, ops.h, np.zeros(51), 0.02, 2, logrho
        )
        assert np.max(np.abs(out - logrho[None, :])) < 1e-10

    def test_sampled_stationary_drifts_at_discretization_order(self):
        sd = math.sqrt(0.5)  # stationary spread for a = -x, sigma = 1
        drift = {}
        for n in (200, 400):
            model = ou_model(n=n, h="zero", nu0=f"gauss:0,{sd}")
            ops = grid.build_grid_operators(model)
            mu = grid.integrate_mu_forward_pde(model, flat_observations(), ops=ops)
            inner = np.abs(ops.x) <= 3.0
            drift[n] = np.max(np.abs(mu[:, inner] - mu[0][None, inner]))
        assert drift[200] < 0.06
        assert drift[200] / drift[400] > 3.0

    def test_decoupled_closed_form(self):
        model = DiffusionModel1D(
            a="zero", sigma="const:1e-9", h="linear:1", nu0="gauss:0,0.5", x_min=-2.0, x_max=2.0, n=64
        )
        rng = np.random.default_rng(9)
        N = 50
        z = np.concatenate([[0.0], np.cumsum(0.05 * rng.standard_normal(N))])
        obs = ObservationPath(T=1.0, N=N, z=z)
        mu = grid.integrate_mu_forward_pde(model, obs)
        x = model.grid()
        t = obs.times()
        expected = np.log(model.prior_on_grid())[None, :] - 0.5 * x[None, :] ** 2 * t[:, None]
        np.testing.assert_allclose(mu, expected, atol=1e-10)

    def test_matches_filter_moments(self, lg_model, obs_lg, grid_model):
        _, _, mf, Pf = oracles.kalman_rts(lg_model, obs_lg, return_filter=True)
        ops = grid.build_grid_operators(grid_model)
        mu = grid.integrate_mu_forward_pde(grid_model, obs_lg, ops=ops)
        for k in range(0, obs_lg.N + 1, 100):
            lw = mu[k] + obs_lg.z[k] * ops.h
            rho = np.exp(lw - lw.max())
            rho /= rho.sum() * ops.dx
            mean = (rho * ops.x).sum() * ops.dx
            var = (rho * (ops.x - mean) ** 2).sum() * ops.dx
            assert abs(mean - mf[k, 0]) < 1e-2
            assert abs(var - Pf[k, 0, 0]) < 1e-2


class TestControlField:
    def test_constant_field_gives_zero(self, grid_model, obs_lg):
        ops = grid.build_grid_operators(grid_model)
        lam = obs_lg.z[:, None] * ops.h[None, :] + 3.0
        u = grid.optimal_control_field(lam, obs_lg, grid_model, ops=ops)
        assert np.max(np.abs(u)) < 1e-10

    def test_quadratic_field(self, grid_model, obs_lg):
        ops = grid.build_grid_operators(grid_model)
        lam = obs_lg.z[:, None] * ops.h[None, :] + ops.x[None, :] ** 2
        u = grid.optimal_control_field(lam, obs_lg, grid_model, ops=ops)
        np.testing.assert_allclose(u, np.tile(2 * ops.x, (obs_lg.N + 1, 1)), atol=1e-9)

    def test_affine_on_linear_gaussian_fixture(self, grid_model, obs_lg):
        """Linear-Gaussian theory gives an affine control field; the computed
        field deviates from its least-squares line only at discretization
        order (second order in dx)."""
        res = {}
        for n in (200, 400):
            model = grid_model_with_n(grid_model, n)
            ops = grid.build_grid_operators(model)
            lam = grid.integrate_lambda_backward_pde(model, obs_lg, ops=ops)
            u = grid.optimal_control_field(lam, obs_lg, model, ops=ops)
            inner = grid.interior_slice(n)
            x = ops.x[inner]
            worst = 0.0
            for k in range(0, obs_lg.N + 1, 100):
                coef = np.polyfit(x, u[k][inner], 1)
                worst = max(worst, np.max(np.abs(u[k][inner] - np.polyval(coef, x))))
            res[n] = worst
        assert res[400] < 2e-3
        assert res[200] / res[400] > 3.0


class TestTransportPde:
    def test_zero_control_matches_matrix_exponential(self):
        model = ou_model(n=32, h="zero", lo=-5.0, hi=5.0)
        ops = grid.build_grid_operators(model)
        obs = flat_observations(T=0.5, N=20)
        pi0 = model.prior_on_grid()
        pi = grid.integrate_pi_forward_pde(model, np.zeros((21, 32)), pi0, obs, ops=ops)
        flow = oracles.marginal_flow(ops.adjoint_matrix(), pi0, obs.dt, obs.N)
        flow /= flow.sum(axis=1, keepdims=True) * model.dx
        assert np.max(np.abs(pi - flow)) < 1e-6

    def test_zero_control_keeps_discrete_stationary(self):
        model = ou_model(n=64, h="zero", lo=-5.0, hi=5.0)
        ops = grid.build_grid_operators(model)
        M = ops.adjoint_matrix()
        w, V = np.linalg.eig(M)
        rho = np.abs(np.real(V[:, np.argmin(np.abs(w))]))
        rho /= rho.sum() * ops.dx
        obs = flat_observations(T=1.0, N=50)
        pi = grid.integrate_pi_forward_pde(model, np.zeros((51, 64)), rho, obs, ops=ops)
        assert np.max(np.abs(pi - rho[None, :])) < 1e-9

    def test_mass_conserved(self, grid_model, obs_lg):
        res = grid.solve(grid_model, obs_lg)
        dx = grid_model.dx
        assert np.max(np.abs(res.pi_controlled.sum(axis=1) * dx - 1.0)) < 1e-8
        assert res.mass_drift < 1e-9


class TestOptimalInitialDensity:
    def test_zero_field(self, grid_model):
        nu0 = grid_model.prior_on_grid()
        pi0, logC = grid.optimal_pi0_grid(nu0, np.zeros(grid_model.n), grid_model.dx)
        np.testing.assert_allclose(pi0, nu0, atol=1e-12)
        assert logC == pytest.approx(0.0, abs=1e-12)

    def test_constant_shift(self, grid_model):
        nu0 = grid_model.prior_on_grid()
        pi0, logC = grid.optimal_pi0_grid(nu0, 1.3 * np.ones(grid_model.n), grid_model.dx)
        np.testing.assert_allclose(pi0, nu0, atol=1e-12)
        assert logC == pytest.approx(1.3, abs=1e-12)

    def test_matches_smoother_time_zero_marginal(self, lg_model, obs_lg, grid_model):
        means, covs = oracles.kalman_rts(lg_model, obs_lg)
        res = grid.solve(grid_model, obs_lg)
        x = res.solution.x
        dx = grid_model.dx
        mean = (res.pi0 * x).sum() * dx
        var = (res.pi0 * (x - mean) ** 2).sum() * dx
        assert abs(mean - means[0, 0]) < 1e-2
        assert abs(var - covs[0, 0, 0]) < 1e-2


class TestHjbResidual:
    def test_zero_observation_function(self):
        model = ou_model(n=100, h="zero")
        obs = flat_observations()
        lam = grid.integrate_lambda_backward_pde(model, obs)
        _, res = grid.hjb_residual(lam, obs, model)
        assert np.max(np.abs(res)) < 1e-9

    def test_decoupled_closed_form(self):
        model = DiffusionModel1D(
            a="zero", sigma="const:1e-9", h="linear:1", nu0="gauss:0,0.5", x_min=-2.0, x_max=2.0, n=64
        )
        rng = np.random.default_rng(10)
        N = 40
        z = np.concatenate([[0.0], np.cumsum(0.05 * rng.standard_normal(N))])
        obs = ObservationPath(T=1.0, N=N, z=z)
        lam = grid.integrate_lambda_backward_pde(model, obs)
        _, res = grid.hjb_residual(lam, obs, model)
        assert np.max(np.abs(res)) < 1e-9

    def test_refinement_convergence(self, grid_model, obs_lg):
        values = {}
        for n in (200, 400):
            model = grid_model_with_n(grid_model, n)
            ops = grid.build_grid_operators(model)
            lam = grid.integrate_lambda_backward_pde(model, obs_lg, ops=ops)
            _, res = grid.hjb_residual(lam, obs_lg, model, ops=ops)
            inner = grid.interior_slice(n)
            values[n] = np.max(np.abs(res[:, inner]))
        assert values[200] / values[400] > 3.0


class TestRouteEquivalence:
    def test_gap_decreases_at_discretization_order(self, grid_model, obs_lg):
        gaps = {}
        for n in (100, 200):
            res = grid.solve(grid_model_with_n(grid_model, n), obs_lg)
            gaps[n] = res.route_equivalence_linf
        assert gaps[100] / gaps[200] > 2.5
        assert gaps[200] < 5e-3

    def test_log_normalizer_constant(self, grid_model, obs_lg):
        res = grid.solve(grid_model_with_n(grid_model, 200), obs_lg)
        assert res.log_normalizer_spread < 1e-4


class TestGridCost:
    def test_optimal_cost_is_minus_logC_at_reference_resolution(self, grid_model, obs_lg):
        res = grid.solve(grid_model_with_n(grid_model, 800), obs_lg)
        assert abs(res.J_opt + res.solution.logC) < 1e-4

    def test_perturbed_controls_cost_more(self, grid_model, obs_lg):
        model = grid_model_with_n(grid_model, 200)
        ops = grid.build_grid_operators(model)
        res = grid.solve(model, obs_lg, ops=ops)
        lam = res.solution.lam
        u = res.solution.u
        u_mid = grid._control_midpoints(ops, obs_lg, lam)
        rng = np.random.default_rng(15)
        for _ in range(5):
            bump = 0.05 * rng.standard_normal(model.n)[None, :]
            J = grid.cost_J_grid(model, res.pi0, u + bump, u_mid + bump, obs_lg, ops=ops)
            assert J > res.J_opt
