"""Implicit-family variational inference: objectives, optimizer, risk.

Oracles
-------
* Per-datum divergences have analytic Gaussian forms; stripping the
  analytic hooks exercises the quadrature fallback, which must agree.
* The Bernoulli model's divergences are two-point sums computed directly
  from the likelihood in the test, independent of the module's closures.
* For uniform priors, KL-neighborhood prior mass is an interval-length
  ratio, making every term of the risk bound computable by hand: the
  second-moment constraint binds at d = sigma * sqrt(r) with
  r = 2 (sqrt(1 + eps^2) - 1).
* A quantile-transfer member with small noise is nearly Gaussian, so its
  per-datum risk integral matches alpha ((m - theta*)^2 + var_q) / (2 s^2).
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
import pytest
from scipy.integrate import trapezoid
from scipy.stats import norm

from nllvm_lab.gpivi import (
    BayesModel,
    KLBallSpec,
    OptConfig,
    RestrictedFamily,
    RestrictedFamilySpec,
    SupportError,
    UnsupportedError,
    VariationalParams,
    kl_ball_contains,
    kl_ball_mask,
    logistic_model,
    model_fit_term,
    normal_mean_model,
    normal_normal_model,
    normal_quantile_transfer,
    optimize,
    per_datum_kl_v,
    per_datum_renyi,
    practical_objective,
    psi_diagnostic,
    q_density,
    quadrature_posterior,
    restricted_min_kl,
    risk_bound_rhs,
    risk_integral,
    total_loglik,
)
from nllvm_lab.grid_density import GridSpec, ResolutionError, kl_values


@pytest.fixture(scope="module")
def nn() -> BayesModel:
    return normal_normal_model()


@pytest.fixture(scope="module")
def nm() -> BayesModel:
    return normal_mean_model()


def _strip_hooks(model: BayesModel) -> BayesModel:
    """Copy of the model without analytic divergences (quadrature path)."""
    return dataclasses.replace(model, kl1=None, v1=None, renyi1=None)


class TestParamsAndSpecs:
    """Dataclass validation."""

    def test_variational_params(self):
        p = VariationalParams(normal_quantile_transfer(0.0, 1.0), -1.0)
        assert p.sigma == pytest.approx(math.exp(-1.0))
        with pytest.raises(ValueError, match="log_sigma"):
            VariationalParams(normal_quantile_transfer(0.0, 1.0), np.nan)

    def test_kl_ball_spec(self):
        KLBallSpec(0.3, 0.1, 100)
        with pytest.raises(ValueError, match="eps"):
            KLBallSpec(0.3, 0.0, 100)
        with pytest.raises(ValueError, match="n"):
            KLBallSpec(0.3, 0.1, 0)

    def test_restricted_family_spec(self):
        RestrictedFamilySpec(1.0, 0.3, 2.0)
        with pytest.raises(ValueError, match="positive"):
            RestrictedFamilySpec(0.0, 0.3, 2.0)
        with pytest.raises(ValueError, match="c0"):
            RestrictedFamilySpec(1.0, 0.3, 0.5)


class TestNormalQuantileTransfer:
    """Quantile-map transfer functions."""

    def test_tau_positive(self):
        with pytest.raises(ValueError, match="tau"):
            normal_quantile_transfer(0.0, 0.0)

    def test_midpoint_and_symmetry(self):
        mu = normal_quantile_transfer(0.3, 0.4)
        assert mu(np.array([0.5]))[0] == pytest.approx(0.3, abs=1e-12)
        left, right = mu(np.array([0.25, 0.75]))
        assert left + right == pytest.approx(0.6, abs=1e-12)

    def test_pushforward_is_nearly_gaussian(self):
        # U(0,1) through the N(m, tau^2) quantile map plus N(0, s^2) noise
        params = VariationalParams(
            normal_quantile_transfer(0.3, 0.4), math.log(0.3)
        )
        spec = GridSpec(-3.0, 3.6, 2048)
        q = q_density(params, spec)
        exact = norm.pdf(spec.points(), 0.3, 0.5)
        assert np.max(np.abs(q.values - exact)) < 2e-3


class TestPerDatumDivergences:
    """Analytic hooks against the quadrature fallback."""

    THETAS = np.array([0.25, 0.3, 0.42])

    def test_kl_v_quadrature_matches_analytic(self, nm):
        kl_a, v_a = per_datum_kl_v(nm, self.THETAS)
        kl_q, v_q = per_datum_kl_v(_strip_hooks(nm), self.THETAS)
        np.testing.assert_allclose(kl_q, kl_a, atol=1e-12)
        np.testing.assert_allclose(v_q, v_a, atol=1e-12)

    def test_renyi_quadrature_matches_analytic(self, nm):
        r_a = per_datum_renyi(nm, 0.6, self.THETAS)
        r_q = per_datum_renyi(_strip_hooks(nm), 0.6, self.THETAS)
        np.testing.assert_allclose(r_q, r_a, atol=1e-12)

    def test_renyi_alpha_range(self, nm):
        for alpha in (0.0, 1.0, 1.5):
            with pytest.raises(ValueError, match="alpha"):
                per_datum_renyi(nm, alpha, self.THETAS)

    def test_needs_window_or_hooks(self, nm):
        blind = dataclasses.replace(_strip_hooks(nm), data_window=None)
        with pytest.raises(UnsupportedError, match="data_window"):
            per_datum_kl_v(blind, self.THETAS)

    def test_bernoulli_two_point_sums(self):
        # recompute the divergences from the likelihood alone
        model = logistic_model(theta_star=0.5)
        thetas = np.array([-0.4, 0.5, 1.3])
        y = np.array([0.0, 1.0])
        p_star = np.exp(model.log_likelihood(0.5, y))
        kl_hand = np.empty(3)
        v_hand = np.empty(3)
        renyi_hand = np.empty(3)
        alpha = 0.7
        for i, th in enumerate(thetas):
            log_ratio = model.log_likelihood(0.5, y) - model.log_likelihood(th, y)
            kl_hand[i] = np.sum(p_star * log_ratio)
            v_hand[i] = np.sum(p_star * log_ratio**2)
            mix = np.exp(
                alpha * model.log_likelihood(th, y)
                + (1 - alpha) * model.log_likelihood(0.5, y)
            )
            renyi_hand[i] = math.log(np.sum(mix)) / (alpha - 1.0)
        kl, v = per_datum_kl_v(model, thetas)
        np.testing.assert_allclose(kl, kl_hand, atol=1e-12)
        np.testing.assert_allclose(v, v_hand, atol=1e-12)
        np.testing.assert_allclose(
            per_datum_renyi(model, alpha, thetas), renyi_hand, atol=1e-12
        )

    def test_divergences_vanish_at_theta_star(self, nm):
        kl, v = per_datum_kl_v(nm, np.array([nm.theta_star]))
        assert kl[0] == 0.0 and v[0] == 0.0


class TestKlBall:
    """Neighborhood membership: the second-moment constraint binds."""

    def test_membership_boundary(self, nm):
        # v1 <= eps^2 gives |theta - 0.3| <= sigma * sqrt(r), about 0.03
        spec = KLBallSpec(0.3, 0.1, 100)
        assert kl_ball_contains(spec, nm, 0.31)
        assert kl_ball_contains(spec, nm, 0.3)
        # 0.34 passes the KL constraint but fails the second-moment one
        assert nm.kl1(np.array([0.34]))[0] <= 0.1**2
        assert not kl_ball_contains(spec, nm, 0.34)

    def test_mask_matches_scalar_calls(self, nm):
        spec = KLBallSpec(0.3, 0.1, 100)
        thetas = np.linspace(0.2, 0.4, 21)
        mask = kl_ball_mask(spec, nm, thetas)
        scalar = np.array([kl_ball_contains(spec, nm, t) for t in thetas])
        np.testing.assert_array_equal(mask, scalar)

    def test_non_iid_model_unsupported(self, nm):
        dependent = dataclasses.replace(nm, iid=False)
        with pytest.raises(UnsupportedError, match="IID"):
            kl_ball_mask(KLBallSpec(0.3, 0.1, 10), dependent, np.array([0.3]))


class TestObjective:
    """Tempered objective and its diagnostics."""

    def test_total_loglik_matches_direct_sum(self, nn):
        grid = np.linspace(-1.0, 1.0, 11)
        data = nn.sample_data(np.random.default_rng(0), 7)
        direct = np.array(
            [sum(float(nn.log_likelihood(g, y)) for y in data) for g in grid]
        )
        np.testing.assert_allclose(total_loglik(nn, data, grid), direct, atol=1e-10)

    def test_validations(self, nn):
        params = VariationalParams(normal_quantile_transfer(0.3, 0.1), -3.0)
        with pytest.raises(ValueError, match="alpha"):
            practical_objective(params, nn, np.array([0.1]), 1.0)
        with pytest.raises(ValueError, match="non-empty"):
            practical_objective(params, nn, np.array([]), 0.5)
        with pytest.raises(ValueError, match="alpha"):
            psi_diagnostic(params, nn, np.array([0.1]), 0.0)

    def test_support_error_outside_uniform_prior(self, nm):
        # q mass beyond the prior's interval is flagged, not silently kept
        bad = VariationalParams(normal_quantile_transfer(0.95, 0.2), math.log(0.1))
        with pytest.raises(SupportError, match="outside the prior support"):
            practical_objective(
                bad, nm, np.array([0.3]), 0.5, spec=GridSpec(-3.0, 3.0, 2048)
            )

    # a window that carries all of q's mass; much cheaper than the full
    # prior grid the diagnostics default to
    PSI_SPEC = GridSpec(-1.5, 2.1, 1024)

    def test_fit_term_is_alpha_free(self, nn):
        # psi minus its regularizer depends on the data and q alone
        params = VariationalParams(normal_quantile_transfer(0.3, 0.1), math.log(0.05))
        data = nn.sample_data(np.random.default_rng(1), 20)
        m1 = model_fit_term(params, nn, data, 0.3, spec=self.PSI_SPEC)
        m2 = model_fit_term(params, nn, data, 0.7, spec=self.PSI_SPEC)
        assert m1 == pytest.approx(m2, abs=1e-9)

    def test_fit_term_mean_for_root_n_gaussian_q(self):
        # q = N(theta*, 1/n) around the truth: the fit term reduces to
        # n * E_q[(theta - theta*)^2] / (2 sigma^2) = 1 at sigma^2 = 1/2.
        # For a q centered exactly at theta* the data enters linearly and
        # cancels in the q-average, so replicates agree to round-off.
        nn2 = normal_normal_model(sigma=math.sqrt(0.5))
        n = 50
        tau = s = math.sqrt(0.5 / n)
        params = VariationalParams(
            normal_quantile_transfer(nn2.theta_star, tau), math.log(s)
        )
        spec = GridSpec(-0.7, 1.3, 512)
        vals = [
            model_fit_term(
                params, nn2, nn2.sample_data(np.random.default_rng(seed), n),
                0.5, spec=spec,
            )
            for seed in (0, 1, 2)
        ]
        assert abs(np.mean(vals) - 1.0) < 0.2
        assert max(vals) - min(vals) < 1e-9

    def test_psi_decomposition_recovers_kl(self, nn):
        # alpha * (psi - fit term) is the regularizer, the same at any alpha
        params = VariationalParams(normal_quantile_transfer(0.3, 0.1), math.log(0.05))
        data = nn.sample_data(np.random.default_rng(1), 20)
        kl1 = 0.3 * (
            psi_diagnostic(params, nn, data, 0.3, spec=self.PSI_SPEC)
            - model_fit_term(params, nn, data, 0.3, spec=self.PSI_SPEC)
        )
        kl2 = 0.7 * (
            psi_diagnostic(params, nn, data, 0.7, spec=self.PSI_SPEC)
            - model_fit_term(params, nn, data, 0.7, spec=self.PSI_SPEC)
        )
        assert kl1 == pytest.approx(kl2, abs=1e-9)
        assert kl1 > 0


class TestOptimize:
    """Deterministic coordinate descent."""

    def test_knot_bounds_and_empty_data(self, nn):
        with pytest.raises(ValueError, match="knots"):
            optimize(nn, np.array([0.1]), 0.5, knots=7)
        with pytest.raises(ValueError, match="knots"):
            optimize(nn, np.array([0.1]), 0.5, knots=257)
        with pytest.raises(ValueError, match="non-empty"):
            optimize(nn, np.array([]), 0.5)

    def test_recovers_the_tempered_posterior(self, nn):
        # conjugate target: the fitted q should sit on the alpha-posterior
        data = nn.sample_data(np.random.default_rng(7), 40)
        res = optimize(nn, data, 0.9, knots=12, opt=OptConfig(iters=30))
        assert res.converged or res.stalled or res.n_sweeps == 30
        assert 1 <= res.n_sweeps <= 30
        assert math.isfinite(res.objective)

        q = q_density(res.params, nn.prior_density.spec)
        exact = nn.exact_alpha_posterior(data, 0.9)
        kl = kl_values(q.values, exact.values, q.spacing)
        assert kl < 0.01

        # improves on (or matches) the initializer
        init = nn.init_guess(data, 0.9, 12)
        assert res.objective <= practical_objective(init, nn, data, 0.9) + 1e-9

    def test_deterministic(self, nn):
        data = nn.sample_data(np.random.default_rng(7), 40)
        a = optimize(nn, data, 0.9, knots=12, opt=OptConfig(iters=30))
        b = optimize(nn, data, 0.9, knots=12, opt=OptConfig(iters=30))
        assert a.objective == b.objective
        np.testing.assert_array_equal(a.params.mu.values, b.params.mu.values)
        assert a.params.log_sigma == b.params.log_sigma


@pytest.fixture(scope="module")
def family() -> RestrictedFamily:
    spec = RestrictedFamilySpec(M=1.0, sigma_n=0.3, c0=2.0)
    return RestrictedFamily(spec, GridSpec(-8.0, 8.0, 1024))


class TestRestrictedFamily:
    """Comparator-family minimum KL."""

    def test_member_attains_zero(self, family):
        # the KL from a family member to itself is zero on the shared grid
        m_val, tau = family.labels[200]
        member = VariationalParams(
            normal_quantile_transfer(m_val, tau), math.log(0.3)
        )
        dens = q_density(member, family.grid_spec, m=1024, refine=False)
        assert abs(family.min_kl(dens)) < 1e-10

    def test_grid_mismatch_rejected(self, family, nn):
        other = nn.exact_posterior(np.array([0.3]), spec=GridSpec(-8.0, 8.0, 512))
        with pytest.raises(ValueError, match="grid"):
            family.min_kl(other)

    def test_family_shape(self, family):
        assert family.members.shape == (
            RestrictedFamily.N_MEANS * RestrictedFamily.N_TAUS,
            1024,
        )
        assert family.taus[0] == pytest.approx(0.3)
        assert family.taus[-1] == pytest.approx(0.3 * math.sqrt(2.0))

    def test_needs_exact_posterior(self):
        spec = RestrictedFamilySpec(M=1.0, sigma_n=0.3, c0=2.0)
        with pytest.raises(UnsupportedError, match="exact posterior"):
            restricted_min_kl(spec, logistic_model(), np.array([1.0, 0.0]))


class TestRiskQuantities:
    """Risk integral and the high-probability bound."""

    def test_risk_integral_concentrated_q(self, nn):
        # q is nearly N(0.5, tau^2 + s^2); the Gaussian risk is exact
        theta0, tau, s = 0.5, 0.05, 0.02
        params = VariationalParams(
            normal_quantile_transfer(theta0, tau), math.log(s)
        )
        got = risk_integral(params, nn, 0.6, spec=GridSpec(-0.5, 1.5, 1024))
        var_q = tau**2 + s**2
        expected = 0.6 * ((theta0 - nn.theta_star) ** 2 + var_q) / 2.0
        assert got == pytest.approx(expected, rel=0.01)

    def test_risk_bound_hand_oracle(self, nm):
        # uniform prior: ball mass = sigma * sqrt(r), every term by hand
        eps, alpha, d_const = 0.1, 0.5, 2.0
        r = 2.0 * (math.sqrt(1.0 + eps**2) - 1.0)
        mass_hand = 0.3 * math.sqrt(r)
        for n, a1 in ((100, False), (1000, True)):
            rb = risk_bound_rhs(nm, np.zeros(n), alpha, eps, d_const)
            assert rb.ball_mass == pytest.approx(mass_hand, rel=0.03)
            complexity = math.log(1.0 / rb.ball_mass) / (n * (1.0 - alpha))
            assert rb.complexity == pytest.approx(complexity, rel=1e-12)
            assert rb.rhs == pytest.approx(
                d_const * alpha / (1.0 - alpha) * eps**2 + complexity, rel=1e-12
            )
            assert rb.remainder == pytest.approx(
                math.log((d_const - 1.0) ** 2 * n * eps**2) / (n * (1.0 - alpha)),
                abs=1e-15,
            )
            assert rb.a1_holds is a1
            assert rb.a1_printed_sign_holds is False

    def test_remainder_vanishes_when_n_eps2_is_one(self, nm):
        # (D-1)^2 n eps^2 = 1 makes the remainder exactly log(1) = 0
        rb = risk_bound_rhs(nm, np.zeros(100), 0.5, 0.1, 2.0)
        assert rb.remainder == pytest.approx(0.0, abs=1e-15)

    def test_validations(self, nm):
        with pytest.raises(ValueError, match="alpha"):
            risk_bound_rhs(nm, np.zeros(10), 1.0, 0.1)
        with pytest.raises(ValueError, match="d_const"):
            risk_bound_rhs(nm, np.zeros(10), 0.5, 0.1, 1.0)
        with pytest.raises(ValueError, match="non-empty"):
            risk_bound_rhs(nm, np.array([]), 0.5, 0.1)

    def test_unresolvable_ball_raises(self, nm):
        with pytest.raises(ResolutionError, match="no prior mass"):
            risk_bound_rhs(nm, np.zeros(100), 0.5, 1e-6)


class TestShippedModels:
    """Constructor validation and the exact-posterior hooks."""

    def test_constructor_validation(self):
        with pytest.raises(ValueError, match="positive"):
            normal_mean_model(sigma=0.0)
        with pytest.raises(ValueError, match="inside the prior"):
            normal_mean_model(theta_star=1.5)
        with pytest.raises(ValueError, match="positive"):
            normal_normal_model(prior_sigma=0.0)

    def test_priors_are_normalized(self, nn, nm):
        for model in (nn, nm, logistic_model()):
            assert model.prior_density.integral() == pytest.approx(1.0, abs=1e-12)

    def test_sample_data_centers_on_theta_star(self, nn):
        data = nn.sample_data(np.random.default_rng(0), 4000)
        assert data.mean() == pytest.approx(nn.theta_star, abs=0.05)

    def test_quadrature_posterior_matches_conjugate(self, nn):
        data = nn.sample_data(np.random.default_rng(0), 50)
        quad = quadrature_posterior(nn, data)
        exact = nn.exact_posterior(data)
        np.testing.assert_allclose(quad.values, exact.values, atol=1e-10)

    def test_alpha_posterior_interpolates(self, nn):
        # alpha = 1 recovers the ordinary posterior; alpha < 1 is wider
        data = nn.sample_data(np.random.default_rng(2), 30)
        full = nn.exact_alpha_posterior(data, 1.0)
        exact = nn.exact_posterior(data)
        np.testing.assert_allclose(full.values, exact.values, atol=1e-14)
        tempered = nn.exact_alpha_posterior(data, 0.2)
        grid = nn.prior_density.grid
        sd_t = math.sqrt(trapezoid(tempered.values * grid**2, grid)
                         - trapezoid(tempered.values * grid, grid) ** 2)
        sd_f = math.sqrt(trapezoid(full.values * grid**2, grid)
                         - trapezoid(full.values * grid, grid) ** 2)
        assert sd_t > sd_f

    def test_logistic_likelihood_normalizes(self):
        model = logistic_model()
        for theta in (-1.0, 0.0, 2.0):
            total = sum(
                math.exp(float(model.log_likelihood(theta, y))) for y in (0.0, 1.0)
            )
            assert total == pytest.approx(1.0, abs=1e-12)
