"""Implicit variational inference with a latent-transfer Gaussian family.

The variational density is the same object the sampler targets: a latent
eta ~ U(0,1) pushed through a transfer function mu and smoothed by Gaussian
noise, q(theta) = integral phi_sigma(theta - mu(eta)) deta.  In one
dimension the implicit density is made fully explicit by quadrature, so the
tempered variational objective

    alpha * E_q[-sum_i log p(y_i | theta)] + KL(q || prior)

and every diagnostic derived from it are computed exactly on a grid — no
density-ratio estimation anywhere.

The module also ships the quantities used by the risk analysis: KL
neighborhoods of the true parameter, prior mass of those neighborhoods, the
per-datum Renyi risk of a fitted q, and the restricted Gaussian-family
minimum KL to an exact posterior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Optional

import numpy as np
from scipy.integrate import trapezoid
from scipy.stats import norm

from .grid_density import (
    DENSITY_FLOOR,
    GridDensity,
    GridSpec,
    ResolutionError,
    kl_values,
)
from .transfer_map import CoverageError, TransferFunction, mixture_density

DEFAULT_D_CONST = 2.0
_QUAD_Y_POINTS = 4097
_ABS_CONTINUITY_TOL = 1e-8
_FD_REL_STEP = 1e-4
_MAX_HALVINGS = 30
_REL_OBJ_TOL = 1e-8
MIN_OPT_KNOTS = 8
MAX_OPT_KNOTS = 256


class UnsupportedError(ValueError):
    """The model lacks a hook (exact posterior, IID structure) the op needs."""


class SupportError(ValueError):
    """The variational density puts mass where the prior has none."""


@dataclass(eq=False)
class BayesModel:
    """A one-parameter Bayesian model with optional analytic shortcuts.

    ``log_likelihood(theta, y)`` must broadcast over numpy arrays in both
    arguments.  The divergence hooks (``kl1``, ``v1``, ``renyi1``) are
    per-datum quantities; when absent they are recovered by quadrature over
    ``data_window``, which therefore must be wide enough to carry the data
    distribution under theta_star.
    """

    name: str
    log_likelihood: Callable[[Any, Any], Any]
    log_prior: Callable[[Any], Any]
    theta_star: float
    prior_density: GridDensity
    exact_posterior: Optional[Callable[..., GridDensity]] = None
    exact_alpha_posterior: Optional[Callable[..., GridDensity]] = None
    kl1: Optional[Callable[[Any], Any]] = None
    v1: Optional[Callable[[Any], Any]] = None
    renyi1: Optional[Callable[[float, Any], Any]] = None
    data_window: Optional[tuple] = None
    init_guess: Optional[Callable[..., "VariationalParams"]] = None
    sample_data: Optional[Callable[[np.random.Generator, int], np.ndarray]] = None
    iid: bool = True


@dataclass(eq=False)
class VariationalParams:
    """Transfer function plus log noise scale: one member of the family."""

    mu: TransferFunction
    log_sigma: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.log_sigma):
            raise ValueError(f"log_sigma must be finite, got {self.log_sigma}")

    @property
    def sigma(self) -> float:
        return math.exp(self.log_sigma)


@dataclass(frozen=True)
class KLBallSpec:
    """A KL neighborhood of theta_star at sample size n."""

    theta_star: float
    eps: float
    n: int

    def __post_init__(self) -> None:
        if not (self.eps > 0):
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")


@dataclass(frozen=True)
class RestrictedFamilySpec:
    """Mean-bounded, variance-bracketed Gaussian-like comparator family."""

    M: float
    sigma_n: float
    c0: float

    def __post_init__(self) -> None:
        if not (self.M > 0 and self.sigma_n > 0):
            raise ValueError("M and sigma_n must be positive")
        if self.c0 < 1:
            raise ValueError(f"c0 must be >= 1, got {self.c0}")


def normal_quantile_transfer(
    m: float, tau: float, *, n_knots: int = 513, clip: float = 1e-6
) -> TransferFunction:
    """Transfer function equal to the N(m, tau^2) quantile map on [0,1].

    Pushing U(0,1) through it and adding N(0, sigma^2) noise yields
    approximately N(m, tau^2 + sigma^2); the quantile levels are clipped at
    ``clip`` to keep the endpoint values finite.
    """
    if not (tau > 0):
        raise ValueError(f"tau must be positive, got {tau}")
    knots = np.linspace(0.0, 1.0, n_knots)
    levels = np.clip(knots, clip, 1.0 - clip)
    return TransferFunction(knots, m + tau * norm.ppf(levels))


def q_density(
    params: VariationalParams, spec: GridSpec, *, m: int = 2048, refine: bool = True
) -> GridDensity:
    """The explicit density of the implicit family member ``params``."""
    return mixture_density(params.mu, params.sigma, spec, m=m, refine=refine)


# ---------------------------------------------------------------------------
# per-datum divergences and KL neighborhoods


def _data_grid(model: BayesModel) -> np.ndarray:
    if model.data_window is None:
        raise UnsupportedError(
            f"model {model.name!r} has neither analytic divergences nor a "
            "data_window for quadrature"
        )
    lo, hi = model.data_window
    return np.linspace(lo, hi, _QUAD_Y_POINTS)


def _kl_v_quadrature(model: BayesModel, thetas: np.ndarray) -> tuple:
    """Per-datum KL and second log-ratio moment by quadrature over y."""
    y = _data_grid(model)
    ll_star = model.log_likelihood(model.theta_star, y)
    p_star = np.exp(ll_star)
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    kl = np.empty(thetas.size)
    v = np.empty(thetas.size)
    for i, th in enumerate(thetas):
        log_ratio = ll_star - model.log_likelihood(th, y)
        kl[i] = trapezoid(p_star * log_ratio, y)
        v[i] = trapezoid(p_star * log_ratio**2, y)
    return kl, v


def per_datum_kl_v(model: BayesModel, thetas) -> tuple:
    """KL1(theta_star || theta) and the matching uncentered second moment."""
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    if model.kl1 is not None and model.v1 is not None:
        return (
            np.asarray(model.kl1(thetas), dtype=float),
            np.asarray(model.v1(thetas), dtype=float),
        )
    return _kl_v_quadrature(model, thetas)


def per_datum_renyi(model: BayesModel, alpha: float, thetas) -> np.ndarray:
    """D_alpha(p_theta || p_theta_star) per datum, analytic or by quadrature."""
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0,1), got {alpha}")
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    if model.renyi1 is not None:
        return np.asarray(model.renyi1(alpha, thetas), dtype=float)
    y = _data_grid(model)
    ll_star = model.log_likelihood(model.theta_star, y)
    out = np.empty(thetas.size)
    for i, th in enumerate(thetas):
        mix = alpha * model.log_likelihood(th, y) + (1.0 - alpha) * ll_star
        out[i] = math.log(max(trapezoid(np.exp(mix), y), DENSITY_FLOOR)) / (
            alpha - 1.0
        )
    return out


def kl_ball_mask(spec: KLBallSpec, model: BayesModel, thetas) -> np.ndarray:
    """Vectorized membership test for the KL neighborhood."""
    if not model.iid:
        raise UnsupportedError(
            "KL-ball membership uses the IID factorization; model is not IID"
        )
    kl, v = per_datum_kl_v(model, thetas)
    bound = spec.eps**2
    return (kl <= bound) & (v <= bound)


def kl_ball_contains(spec: KLBallSpec, model: BayesModel, theta: float) -> bool:
    """True iff theta lies in the KL neighborhood of theta_star."""
    return bool(kl_ball_mask(spec, model, np.asarray([theta]))[0])


# ---------------------------------------------------------------------------
# the variational objective


def total_loglik(model: BayesModel, data: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """sum_i log p(y_i | theta) evaluated on a theta grid, chunked over data."""
    data = np.asarray(data, dtype=float)
    out = np.zeros(grid.size)
    chunk = max(1, int(4_000_000 / max(grid.size, 1)))
    for start in range(0, data.size, chunk):
        block = data[start : start + chunk]
        out += model.log_likelihood(grid[None, :], block[:, None]).sum(axis=0)
    return out


def _prior_on(model: BayesModel, grid: np.ndarray) -> np.ndarray:
    return model.prior_density.pdf_at(grid)


def _check_support(q: GridDensity, prior_vals: np.ndarray) -> None:
    outside = float(
        trapezoid(np.where(prior_vals <= DENSITY_FLOOR, q.values, 0.0), dx=q.spacing)
    )
    if outside > _ABS_CONTINUITY_TOL:
        raise SupportError(
            f"variational mass {outside:.3e} sits outside the prior support"
        )


def practical_objective(
    params: VariationalParams,
    model: BayesModel,
    data,
    alpha: float,
    *,
    spec: Optional[GridSpec] = None,
    loglik: Optional[np.ndarray] = None,
    m: int = 2048,
    refine: bool = True,
) -> float:
    """The tempered variational objective alpha * fit + KL(q || prior).

    Equal, up to an additive constant free of q, to alpha times the
    regularized model-fit functional; all expectations are quadratures
    against the explicit q density on ``spec`` (default: the prior's grid).
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0,1), got {alpha}")
    data = np.asarray(data, dtype=float)
    if data.size == 0:
        raise ValueError("data must be non-empty")
    if spec is None:
        spec = model.prior_density.spec
    q = q_density(params, spec, m=m, refine=refine)
    grid = q.grid
    prior_vals = _prior_on(model, grid)
    _check_support(q, prior_vals)
    kl = kl_values(q.values, prior_vals, q.spacing)
    if loglik is None:
        loglik = total_loglik(model, data, grid)
    fit = -float(trapezoid(q.values * loglik, dx=q.spacing))
    return alpha * fit + kl


def psi_diagnostic(
    params: VariationalParams,
    model: BayesModel,
    data,
    alpha: float,
    *,
    spec: Optional[GridSpec] = None,
) -> float:
    """Model-fit term plus alpha^{-1} KL(q || prior), for simulation studies.

    The model-fit term is E_q of the summed log-likelihood ratio against
    theta_star, so it needs the true parameter and is not a training
    objective; the regularizer enters with a plus sign.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0,1), got {alpha}")
    data = np.asarray(data, dtype=float)
    if data.size == 0:
        raise ValueError("data must be non-empty")
    if spec is None:
        spec = model.prior_density.spec
    q = q_density(params, spec)
    grid = q.grid
    prior_vals = _prior_on(model, grid)
    _check_support(q, prior_vals)
    kl = kl_values(q.values, prior_vals, q.spacing)
    loglik = total_loglik(model, data, grid)
    l_star = float(np.sum(model.log_likelihood(model.theta_star, data)))
    fit_term = l_star - float(trapezoid(q.values * loglik, dx=q.spacing))
    return fit_term + kl / alpha


def model_fit_term(
    params: VariationalParams,
    model: BayesModel,
    data,
    alpha: float,
    *,
    spec: Optional[GridSpec] = None,
) -> float:
    """The diagnostic minus its regularizer (the pure likelihood-ratio term)."""
    psi = psi_diagnostic(params, model, data, alpha, spec=spec)
    if spec is None:
        spec = model.prior_density.spec
    q = q_density(params, spec)
    kl = kl_values(q.values, _prior_on(model, q.grid), q.spacing)
    return psi - kl / alpha


# ---------------------------------------------------------------------------
# optimizer


@dataclass(frozen=True)
class OptConfig:
    """Optimizer knobs; ``init`` overrides the model-supplied initializer."""

    iters: int = 60
    seed: int = 0
    init: Optional[VariationalParams] = None


@dataclass(eq=False)
class OptimizeResult:
    """Best parameters found plus convergence bookkeeping."""

    params: VariationalParams
    objective: float
    converged: bool
    stalled: bool
    n_sweeps: int


def _default_init(
    model: BayesModel, data: np.ndarray, alpha: float, knots: int
) -> VariationalParams:
    """Moment-matched start: a grid MAP fit of the tempered posterior."""
    grid = model.prior_density.grid
    logpost = alpha * total_loglik(model, data, grid) + np.log(
        np.maximum(_prior_on(model, grid), DENSITY_FLOOR)
    )
    w = np.exp(logpost - logpost.max())
    w /= trapezoid(w, dx=model.prior_density.spacing)
    mean = float(trapezoid(w * grid, dx=model.prior_density.spacing))
    var = float(trapezoid(w * (grid - mean) ** 2, dx=model.prior_density.spacing))
    sd = max(math.sqrt(max(var, 0.0)), 2.0 * model.prior_density.spacing)
    tau = sd / math.sqrt(2.0)
    return VariationalParams(
        mu=normal_quantile_transfer(mean, tau, n_knots=knots),
        log_sigma=math.log(tau),
    )


def _work_window(init: VariationalParams, knots: int, n_grid: int = 1024) -> GridSpec:
    values = init.mu.values
    sigma = init.sigma
    scale = max(sigma, float(np.std(values)), 1e-4)
    center = 0.5 * (float(values.min()) + float(values.max()))
    half = max(20.0 * scale, 0.5 * float(values.max() - values.min()) + 10.0 * scale)
    return GridSpec(center - half, center + half, n_grid)


def optimize(
    model: BayesModel,
    data,
    alpha: float,
    knots: int = 16,
    opt: Optional[OptConfig] = None,
) -> OptimizeResult:
    """Coordinate descent on (transfer knot values, log sigma).

    Each coordinate takes a central finite-difference slope (relative step
    1e-4) and a backtracking line search (halving, at most 30); knot values
    are sorted ascending after every sweep.  Terminates when the relative
    objective change over a sweep drops below 1e-8 ("converged") or when a
    sweep makes no progress at a larger change ("stalled"); either way the
    best parameters seen are returned.  The procedure is deterministic.
    """
    if not (MIN_OPT_KNOTS <= knots <= MAX_OPT_KNOTS):
        raise ValueError(
            f"knots must lie in [{MIN_OPT_KNOTS}, {MAX_OPT_KNOTS}], got {knots}"
        )
    data = np.asarray(data, dtype=float)
    if data.size == 0:
        raise ValueError("data must be non-empty")
    opt = opt or OptConfig()

    if opt.init is not None:
        init = opt.init
    elif model.init_guess is not None:
        init = model.init_guess(data, alpha, knots)
    else:
        init = _default_init(model, data, alpha, knots)

    knot_grid = init.mu.knots
    spec = _work_window(init, knots)
    grid = spec.points()
    loglik = total_loglik(model, data, grid)
    sigma_lo = 2.0 * spec.spacing
    sigma_hi = 0.5 * (spec.hi - spec.lo)

    def objective(x: np.ndarray) -> float:
        sigma = math.exp(min(float(x[-1]), 50.0))
        if not (sigma_lo <= sigma <= sigma_hi):
            return math.inf
        params = VariationalParams(
            mu=TransferFunction(knot_grid, x[:-1]), log_sigma=float(x[-1])
        )
        try:
            return practical_objective(
                params, model, data, alpha,
                spec=spec, loglik=loglik, m=512, refine=False,
            )
        except (CoverageError, SupportError):
            return math.inf

    x = np.concatenate([init.mu.values, [init.log_sigma]])
    fx = objective(x)
    if not math.isfinite(fx):
        raise ValueError("initialization is infeasible for the objective")
    best_x, best_f = x.copy(), fx
    steps = np.full(x.size, 0.25)

    converged = stalled = False
    sweeps = 0
    for _ in range(opt.iters):
        sweeps += 1
        f_before = fx
        improved = False
        for i in range(x.size):
            h = _FD_REL_STEP * max(abs(x[i]), 1.0)
            xp, xm = x.copy(), x.copy()
            xp[i] += h
            xm[i] -= h
            g = (objective(xp) - objective(xm)) / (2.0 * h)
            if not math.isfinite(g) or g == 0.0:
                continue
            s = steps[i]
            for attempt in range(_MAX_HALVINGS + 1):
                cand = x.copy()
                cand[i] -= s * g
                fc = objective(cand)
                if fc < fx:
                    x, fx = cand, fc
                    if attempt == 0:
                        steps[i] = min(s * 2.0, 1e3)
                    else:
                        steps[i] = s
                    improved = True
                    break
                s *= 0.5
        # monotone projection: the transfer is a quantile-like map
        order = np.sort(x[:-1])
        if not np.array_equal(order, x[:-1]):
            x = np.concatenate([order, [x[-1]]])
            fx = objective(x)
        if fx < best_f:
            best_x, best_f = x.copy(), fx
        rel = abs(f_before - fx) / max(abs(fx), 1.0)
        if rel < _REL_OBJ_TOL:
            converged = True
            break
        if not improved:
            stalled = True
            break

    params = VariationalParams(
        mu=TransferFunction(knot_grid, best_x[:-1]), log_sigma=float(best_x[-1])
    )
    final_obj = practical_objective(
        params, model, data, alpha, spec=spec, loglik=loglik
    )
    return OptimizeResult(
        params=params,
        objective=float(min(final_obj, best_f)),
        converged=converged,
        stalled=stalled,
        n_sweeps=sweeps,
    )


# ---------------------------------------------------------------------------
# restricted comparator family


class RestrictedFamily:
    """Precomputed density matrix of the mean x tau comparator grid.

    Building the members is the expensive part (each is a quantile-mixture
    quadrature), so the family is constructed once per (spec, grid) and
    reused across data replicates; ``min_kl`` against a posterior is then a
    matrix-vector product.
    """

    N_MEANS = 41
    N_TAUS = 9

    def __init__(self, spec: RestrictedFamilySpec, grid_spec: GridSpec) -> None:
        self.spec = spec
        self.grid_spec = grid_spec
        self.means = np.linspace(-spec.M, spec.M, self.N_MEANS)
        self.taus = np.geomspace(spec.sigma_n, math.sqrt(spec.c0) * spec.sigma_n, self.N_TAUS)
        grid = grid_spec.points()
        members = []
        labels = []
        for m_val in self.means:
            for tau in self.taus:
                params = VariationalParams(
                    mu=normal_quantile_transfer(m_val, tau),
                    log_sigma=math.log(spec.sigma_n),
                )
                dens = q_density(params, grid_spec, m=1024, refine=False)
                members.append(dens.values)
                labels.append((float(m_val), float(tau)))
        self.members = np.asarray(members)
        self.labels = labels
        # trapezoid weights let entropy and cross terms become dot products
        w = np.full(grid.size, grid_spec.spacing)
        w[0] *= 0.5
        w[-1] *= 0.5
        self._weights = w
        logm = np.log(np.maximum(self.members, DENSITY_FLOOR))
        self._neg_entropy = (self.members * logm) @ w

    def min_kl(self, posterior: GridDensity) -> float:
        """min over members of KL(member || posterior) on the shared grid."""
        if posterior.spec != self.grid_spec:
            raise ValueError("posterior grid does not match the family grid")
        logp = np.log(np.maximum(posterior.values, DENSITY_FLOOR))
        kls = self._neg_entropy - self.members @ (self._weights * logp)
        return float(kls.min())


def restricted_min_kl(
    spec: RestrictedFamilySpec,
    model: BayesModel,
    data,
    *,
    grid_spec: Optional[GridSpec] = None,
    family: Optional[RestrictedFamily] = None,
) -> float:
    """Minimum KL from the comparator family to the exact posterior."""
    if model.exact_posterior is None:
        raise UnsupportedError(
            f"model {model.name!r} has no exact posterior; the restricted-family "
            "diagnostic needs one"
        )
    if family is None:
        if grid_spec is None:
            grid_spec = model.prior_density.spec
        family = RestrictedFamily(spec, grid_spec)
    posterior = model.exact_posterior(np.asarray(data, float), spec=family.grid_spec)
    return family.min_kl(posterior)


# ---------------------------------------------------------------------------
# risk quantities


def risk_integral(
    params: VariationalParams,
    model: BayesModel,
    alpha: float,
    *,
    spec: Optional[GridSpec] = None,
) -> float:
    """Per-datum Renyi risk of q: integral of D_alpha(p_theta || p_star) dq.

    For IID data the n-datum divergence is n times the per-datum one, so
    this equals the scaled n-datum risk for every n.
    """
    if spec is None:
        spec = model.prior_density.spec
    q = q_density(params, spec)
    renyi = per_datum_renyi(model, alpha, q.grid)
    return float(trapezoid(q.values * renyi, dx=q.spacing))


@dataclass(eq=False)
class RiskBound:
    """Right-hand side of the high-probability risk bound, split into parts."""

    rhs: float
    remainder: float
    ball_mass: float
    complexity: float
    a1_holds: bool
    a1_printed_sign_holds: bool
    note: str = ""


def risk_bound_rhs(
    model: BayesModel,
    data,
    alpha: float,
    eps: float,
    d_const: float = DEFAULT_D_CONST,
) -> RiskBound:
    """Evaluate D*alpha/(1-alpha)*eps^2 plus the prior-complexity term.

    The KL-neighborhood mass is a quadrature of the prior over the
    membership mask; the O(1/n) remainder log((D-1)^2 n eps^2)/(n(1-alpha))
    is reported separately rather than folded into the bound.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0,1), got {alpha}")
    if d_const <= 1.0:
        raise ValueError(f"d_const must exceed 1, got {d_const}")
    data = np.asarray(data, dtype=float)
    n = data.size
    if n == 0:
        raise ValueError("data must be non-empty")
    ball = KLBallSpec(theta_star=model.theta_star, eps=eps, n=n)
    grid = model.prior_density.grid
    mask = kl_ball_mask(ball, model, grid)
    mass = float(
        trapezoid(
            np.where(mask, model.prior_density.values, 0.0),
            dx=model.prior_density.spacing,
        )
    )
    if mass <= 0.0:
        raise ResolutionError(
            f"KL neighborhood at eps={eps:.4g} carries no prior mass on the "
            f"grid (spacing {model.prior_density.spacing:.3e}); refine the grid"
        )
    mass = min(mass, 1.0)
    log_inv_mass = math.log(1.0 / mass)
    complexity = log_inv_mass / (n * (1.0 - alpha))
    rhs = d_const * alpha / (1.0 - alpha) * eps**2 + complexity
    remainder = math.log((d_const - 1.0) ** 2 * n * eps**2) / (n * (1.0 - alpha))
    n_eps2 = n * eps**2
    return RiskBound(
        rhs=rhs,
        remainder=remainder,
        ball_mass=mass,
        complexity=complexity,
        a1_holds=log_inv_mass <= n_eps2,
        a1_printed_sign_holds=log_inv_mass <= -n_eps2,
        note="prior-mass condition compared against +n*eps^2; the printed "
        "minus-sign variant is unsatisfiable for masses below one",
    )


# ---------------------------------------------------------------------------
# shipped models


def _gaussian_kl1(sigma: float, theta_star: float) -> Callable:
    def kl1(thetas):
        return (np.asarray(thetas, float) - theta_star) ** 2 / (2.0 * sigma**2)

    return kl1


def _gaussian_v1(sigma: float, theta_star: float) -> Callable:
    def v1(thetas):
        d2 = (np.asarray(thetas, float) - theta_star) ** 2 / sigma**2
        return (d2 / 2.0) ** 2 + d2

    return v1


def _gaussian_renyi1(sigma: float, theta_star: float) -> Callable:
    def renyi1(alpha: float, thetas):
        return alpha * (np.asarray(thetas, float) - theta_star) ** 2 / (2.0 * sigma**2)

    return renyi1


def normal_mean_model(
    sigma: float = 0.3,
    theta_star: float = 0.3,
    *,
    prior_halfwidth: float = 1.0,
    grid_n: int = 2048,
) -> BayesModel:
    """Known-variance Gaussian location model with a flat prior.

    The prior is uniform on [-prior_halfwidth, prior_halfwidth], which makes
    KL-neighborhood masses exact length ratios — convenient for checking the
    complexity term by hand.
    """
    if not (sigma > 0 and prior_halfwidth > 0):
        raise ValueError("sigma and prior_halfwidth must be positive")
    if abs(theta_star) >= prior_halfwidth:
        raise ValueError("theta_star must lie inside the prior support")
    prior_spec = GridSpec(-prior_halfwidth, prior_halfwidth, grid_n)
    prior = GridDensity(prior_spec.lo, prior_spec.hi, np.ones(grid_n))
    log_norm = -0.5 * math.log(2.0 * math.pi * sigma**2)

    def log_likelihood(theta, y):
        return log_norm - (np.asarray(y, float) - np.asarray(theta, float)) ** 2 / (
            2.0 * sigma**2
        )

    def log_prior(theta):
        theta = np.asarray(theta, float)
        inside = np.abs(theta) <= prior_halfwidth
        return np.where(inside, -math.log(2.0 * prior_halfwidth), -np.inf)

    def exact_posterior(data, spec=None):
        data = np.asarray(data, float)
        s = spec if spec is not None else prior_spec
        post_sd = sigma / math.sqrt(data.size)
        grid = s.points()
        vals = np.exp(-((grid - data.mean()) ** 2) / (2.0 * post_sd**2))
        return GridDensity(s.lo, s.hi, vals)

    def init_guess(data, alpha, knots):
        data = np.asarray(data, float)
        m0 = float(np.clip(data.mean(), -prior_halfwidth + 0.05, prior_halfwidth - 0.05))
        s0 = sigma / math.sqrt(max(1.0, alpha * data.size))
        tau = s0 / math.sqrt(2.0)
        return VariationalParams(
            mu=normal_quantile_transfer(m0, tau, n_knots=knots),
            log_sigma=math.log(tau),
        )

    def sample_data(rng, n):
        return theta_star + sigma * rng.standard_normal(n)

    return BayesModel(
        name="normal-mean",
        log_likelihood=log_likelihood,
        log_prior=log_prior,
        theta_star=theta_star,
        prior_density=prior,
        exact_posterior=exact_posterior,
        kl1=_gaussian_kl1(sigma, theta_star),
        v1=_gaussian_v1(sigma, theta_star),
        renyi1=_gaussian_renyi1(sigma, theta_star),
        data_window=(theta_star - 10.0 * sigma, theta_star + 10.0 * sigma),
        init_guess=init_guess,
        sample_data=sample_data,
    )


def normal_normal_model(
    sigma: float = 1.0,
    prior_mu: float = 0.0,
    prior_sigma: float = 1.0,
    theta_star: float = 0.3,
    *,
    window: tuple = (-8.0, 8.0),
    grid_n: int = 4096,
) -> BayesModel:
    """Conjugate Gaussian location model with a Gaussian prior."""
    if not (sigma > 0 and prior_sigma > 0):
        raise ValueError("sigma and prior_sigma must be positive")
    prior_spec = GridSpec(window[0], window[1], grid_n)
    grid = prior_spec.points()
    prior = GridDensity(
        prior_spec.lo,
        prior_spec.hi,
        np.exp(-((grid - prior_mu) ** 2) / (2.0 * prior_sigma**2)),
    )
    log_norm = -0.5 * math.log(2.0 * math.pi * sigma**2)

    def log_likelihood(theta, y):
        return log_norm - (np.asarray(y, float) - np.asarray(theta, float)) ** 2 / (
            2.0 * sigma**2
        )

    def log_prior(theta):
        theta = np.asarray(theta, float)
        return -0.5 * math.log(2.0 * math.pi * prior_sigma**2) - (
            theta - prior_mu
        ) ** 2 / (2.0 * prior_sigma**2)

    def _posterior_moments(data, alpha):
        data = np.asarray(data, float)
        prec = alpha * data.size / sigma**2 + 1.0 / prior_sigma**2
        mean = (alpha * data.sum() / sigma**2 + prior_mu / prior_sigma**2) / prec
        return mean, math.sqrt(1.0 / prec)

    def exact_posterior(data, spec=None):
        s = spec if spec is not None else prior_spec
        mean, sd = _posterior_moments(data, 1.0)
        g = s.points()
        return GridDensity(s.lo, s.hi, np.exp(-((g - mean) ** 2) / (2.0 * sd**2)))

    def exact_alpha_posterior(data, alpha, spec=None):
        s = spec if spec is not None else prior_spec
        mean, sd = _posterior_moments(data, alpha)
        g = s.points()
        return GridDensity(s.lo, s.hi, np.exp(-((g - mean) ** 2) / (2.0 * sd**2)))

    def init_guess(data, alpha, knots):
        mean, sd = _posterior_moments(data, alpha)
        tau = sd / math.sqrt(2.0)
        return VariationalParams(
            mu=normal_quantile_transfer(mean, tau, n_knots=knots),
            log_sigma=math.log(tau),
        )

    def sample_data(rng, n):
        return theta_star + sigma * rng.standard_normal(n)

    return BayesModel(
        name="normal-normal",
        log_likelihood=log_likelihood,
        log_prior=log_prior,
        theta_star=theta_star,
        prior_density=prior,
        exact_posterior=exact_posterior,
        exact_alpha_posterior=exact_alpha_posterior,
        kl1=_gaussian_kl1(sigma, theta_star),
        v1=_gaussian_v1(sigma, theta_star),
        renyi1=_gaussian_renyi1(sigma, theta_star),
        data_window=(theta_star - 10.0 * sigma, theta_star + 10.0 * sigma),
        init_guess=init_guess,
        sample_data=sample_data,
    )


def logistic_model(
    theta_star: float = 0.5,
    prior_sigma: float = 2.0,
    *,
    window: tuple = (-8.0, 8.0),
    grid_n: int = 2048,
) -> BayesModel:
    """Intercept-only Bernoulli model: y ~ Bernoulli(sigmoid(theta)).

    No exact posterior; quadrature_posterior provides a reference instead.
    The outcome space is {0, 1}, so the per-datum divergences are two-point
    sums, supplied analytically.
    """
    prior_spec = GridSpec(window[0], window[1], grid_n)
    grid = prior_spec.points()
    prior = GridDensity(
        prior_spec.lo, prior_spec.hi, np.exp(-(grid**2) / (2.0 * prior_sigma**2))
    )

    def log_likelihood(theta, y):
        theta = np.asarray(theta, float)
        y = np.asarray(y, float)
        # y*theta - log(1 + exp(theta)) in a stable form
        return y * theta - np.logaddexp(0.0, theta)

    def log_prior(theta):
        theta = np.asarray(theta, float)
        return -0.5 * math.log(2.0 * math.pi * prior_sigma**2) - theta**2 / (
            2.0 * prior_sigma**2
        )

    def _log_pq(theta):
        theta = np.asarray(theta, float)
        log_p1 = -np.logaddexp(0.0, -theta)
        log_p0 = -np.logaddexp(0.0, theta)
        return log_p1, log_p0

    lp1_star, lp0_star = _log_pq(theta_star)
    p1_star, p0_star = math.exp(lp1_star), math.exp(lp0_star)

    def kl1(thetas):
        lp1, lp0 = _log_pq(thetas)
        return p1_star * (lp1_star - lp1) + p0_star * (lp0_star - lp0)

    def v1(thetas):
        lp1, lp0 = _log_pq(thetas)
        return p1_star * (lp1_star - lp1) ** 2 + p0_star * (lp0_star - lp0) ** 2

    def renyi1(alpha, thetas):
        lp1, lp0 = _log_pq(thetas)
        mix = np.logaddexp(
            alpha * lp1 + (1.0 - alpha) * lp1_star,
            alpha * lp0 + (1.0 - alpha) * lp0_star,
        )
        return mix / (alpha - 1.0)

    def sample_data(rng, n):
        return (rng.random(n) < p1_star).astype(float)

    return BayesModel(
        name="logistic-intercept",
        log_likelihood=log_likelihood,
        log_prior=log_prior,
        theta_star=theta_star,
        prior_density=prior,
        kl1=kl1,
        v1=v1,
        renyi1=renyi1,
        data_window=None,
        sample_data=sample_data,
        iid=True,
    )


def quadrature_posterior(
    model: BayesModel, data, *, spec: Optional[GridSpec] = None
) -> GridDensity:
    """Grid posterior for models without a conjugate form."""
    if spec is None:
        spec = model.prior_density.spec
    grid = spec.points()
    logpost = total_loglik(model, np.asarray(data, float), grid) + np.log(
        np.maximum(model.prior_density.pdf_at(grid), DENSITY_FLOOR)
    )
    vals = np.exp(logpost - logpost.max())
    return GridDensity(spec.lo, spec.hi, vals)
