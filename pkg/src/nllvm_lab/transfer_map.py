"""Transfer functions on [0,1] and the latent-mixture marginal density.

A transfer function mu maps a uniform latent x in [0,1] to the data scale by
piecewise-linear interpolation between knots.  Pushing the uniform latent
through mu and adding Gaussian noise of bandwidth sigma gives the marginal

    f_{mu,sigma}(y) = int_0^1 phi_sigma(y - mu(x)) dx,

computed here by uniform midpoint quadrature in x.  Quantile functions are
the canonical transfer functions: for mu_0 the quantile of f_0, the marginal
equals the Gaussian smoothing of f_0.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from .grid_density import GridDensity, GridSpec, _SQRT_2PI

QUANTILE_CLIP = 1e-6
_X_QUAD_M = 2048
_X_QUAD_CAP = 1 << 16
_X_CHUNK = 8192
COVERAGE_MASS_TOL = 1e-4


class CoverageError(ValueError):
    """Output domain too small for the requested mixture density."""


@dataclass(eq=False)
class TransferFunction:
    """Piecewise-linear map [0,1] -> R through strictly increasing knots."""

    knots: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        k = np.asarray(self.knots, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if k.ndim != 1 or k.shape != v.shape:
            raise ValueError("knots and values must be 1-D arrays of equal length")
        if k.size < 2 or k[0] != 0.0 or k[-1] != 1.0:
            raise ValueError("knots must run from 0 to 1 inclusive")
        if np.any(np.diff(k) <= 0):
            raise ValueError("knots must be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise ValueError("transfer values must be finite")
        self.knots, self.values = k, v

    @classmethod
    def constant(cls, c: float, n_knots: int = 16) -> "TransferFunction":
        return cls(np.linspace(0.0, 1.0, n_knots), np.full(n_knots, float(c)))

    def __call__(self, x: np.ndarray | float) -> np.ndarray:
        return np.interp(x, self.knots, self.values)

    @property
    def lo(self) -> float:
        return float(self.values.min())

    @property
    def hi(self) -> float:
        return float(self.values.max())

    def sup_distance(self, other: "TransferFunction") -> float:
        """Exact sup-norm distance (evaluated on the union of knots)."""
        xs = np.union1d(self.knots, other.knots)
        return float(np.max(np.abs(self(xs) - other(xs))))


def quantile_of(
    f: GridDensity, n_knots: int = 64, *, clip: float = QUANTILE_CLIP
) -> TransferFunction:
    """Quantile function of ``f`` as a transfer function.

    The CDF is accumulated by cumulative trapezoid sums and inverted by
    monotone interpolation; flat CDF stretches (zero-density regions) are
    resolved by the left-continuous inverse and reported with a warning.
    Quantiles are clipped at the [clip, 1 - clip] levels, the constructive
    stand-in for unbounded support.
    """
    if n_knots < 16:
        raise ValueError(f"n_knots must be >= 16, got {n_knots}")
    cdf = cumulative_trapezoid(f.values, dx=f.spacing, initial=0.0)
    cdf /= cdf[-1]
    uniq, first = np.unique(cdf, return_index=True)
    if uniq.size < cdf.size:
        warnings.warn(
            "flat CDF region (zero-density stretch); using the "
            "left-continuous inverse",
            stacklevel=2,
        )
    t = np.linspace(0.0, 1.0, n_knots)
    levels = np.clip(t, clip, 1.0 - clip)
    mu_vals = np.interp(levels, uniq, f.grid[first])
    return TransferFunction(t, np.clip(mu_vals, f.lo, f.hi))


def _mixture_pass(
    mu: TransferFunction, sigma: float, y: np.ndarray, m: int
) -> np.ndarray:
    x = (np.arange(m) + 0.5) / m
    t = mu(x)
    acc = np.zeros_like(y)
    for start in range(0, m, _X_CHUNK):
        block = t[start : start + _X_CHUNK]
        acc += np.exp(-0.5 * ((y[:, None] - block[None, :]) / sigma) ** 2).sum(axis=1)
    return acc / (m * _SQRT_2PI * sigma)


def mixture_density(
    mu: TransferFunction,
    sigma: float,
    spec: GridSpec,
    *,
    m: int = _X_QUAD_M,
    refine: bool = True,
    refine_tol: float = 1e-6,
) -> GridDensity:
    """Marginal density f_{mu,sigma} on the grid of ``spec``.

    The latent integral uses m-point uniform (midpoint) quadrature, doubled
    until successive refinements agree within ``refine_tol`` in sup-norm
    (capped at 2^16 points).  A window covering range(mu) +- 8 sigma always
    passes the coverage check; the error reports the actually lost mass.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    y = spec.points()
    out = _mixture_pass(mu, sigma, y, m)
    while refine and m < _X_QUAD_CAP:
        m *= 2
        nxt = _mixture_pass(mu, sigma, y, m)
        done = float(np.max(np.abs(nxt - out))) < refine_tol
        out = nxt
        if done:
            break
    lost = 1.0 - float(trapezoid(out, dx=spec.spacing))
    if lost > COVERAGE_MASS_TOL:
        raise CoverageError(
            f"domain [{spec.lo}, {spec.hi}] too small for range(mu)="
            f"[{mu.lo:.4g}, {mu.hi:.4g}] with sigma={sigma:.4g}: "
            f"lost mass {lost:.3e}"
        )
    result = GridDensity(spec.lo, spec.hi, out)
    result.mass_loss = lost
    return result


@dataclass(eq=False)
class MixingHistogram:
    """Pushforward of the uniform latent through mu, binned."""

    bin_edges: np.ndarray
    masses: np.ndarray

    def __post_init__(self) -> None:
        edges = np.asarray(self.bin_edges, dtype=float)
        masses = np.asarray(self.masses, dtype=float)
        if edges.size != masses.size + 1:
            raise ValueError("need len(bin_edges) == len(masses) + 1")
        if np.any(np.diff(edges) <= 0):
            raise ValueError("bin_edges must be strictly increasing")
        if np.any(masses < 0):
            raise ValueError("masses must be non-negative")
        total = float(masses.sum())
        if abs(total - 1.0) > 1e-8:
            raise ValueError(f"masses must sum to 1 within 1e-8, got {total}")
        self.bin_edges, self.masses = edges, masses


def induced_histogram(
    mu: TransferFunction, n_bins: int, *, n_samples: int = 1 << 16
) -> MixingHistogram:
    """Histogram of the mixing measure: Lebesgue mass of each level set.

    Uses fine midpoint sampling of x (>= 2^16 points); bins partition the
    range of mu.
    """
    if n_bins < 2:
        raise ValueError(f"n_bins must be >= 2, got {n_bins}")
    n_samples = max(n_samples, 1 << 16)
    x = (np.arange(n_samples) + 0.5) / n_samples
    v = mu(x)
    lo, hi = float(v.min()), float(v.max())
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, n_bins + 1)
    counts, _ = np.histogram(v, bins=edges)
    return MixingHistogram(edges, counts / n_samples)
