"""Forward simulation of the pricing models.

Multi-asset Black-Scholes paths use the exact log-Euler step, so the per-step
marginals are lognormal without discretization bias.  Rough Bergomi paths
discretize the Riemann-Liouville kernel ``sqrt(2H) (t-u)^{H-1/2}`` with a
hybrid plan: the most recent interval gets the exact kernel/increment
covariance, the history gets one weight per lag chosen so the implied
variance of the Volterra process telescopes to ``t^{2H}`` exactly.  A dense
Cholesky sampler with quadrature covariances serves as the exact-law oracle
for tests.

State arrays hold log-prices throughout; exponentiation is deferred to the
payoffs, which keeps paths positive by construction.

Both simulators default to antithetic path pairing: the second half of every
batch uses the negated driver increments.  This preserves all marginal laws,
halves Monte-Carlo variance for monotone payoffs, and keeps every per-step
increment sample mean at exactly zero, which the backward solvers rely on for
their one-step mean identity.  Pass ``antithetic=False`` for plain iid paths.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.integrate

from .core import (
    PathBatch,
    SeedSpec,
    TimeGrid,
    _spd_factor,
    _standard_increments,
    correlation_factor,
)


@dataclass(frozen=True)
class BlackScholesModel:
    """Correlated geometric Brownian motions under the pricing measure."""

    spot: np.ndarray
    rate: float
    sigma: np.ndarray
    corr: np.ndarray

    def __post_init__(self):
        spot = np.atleast_1d(np.asarray(self.spot, dtype=float))
        sigma = np.atleast_1d(np.asarray(self.sigma, dtype=float))
        corr = np.asarray(self.corr, dtype=float)
        object.__setattr__(self, "spot", spot)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "corr", corr)
        if np.any(spot <= 0.0):
            raise ValueError("spot prices must be positive")
        if np.any(sigma < 0.0):
            raise ValueError("volatilities must be nonnegative")
        if corr.shape != (spot.size, spot.size):
            raise ValueError("correlation matrix shape must match asset count")

    @property
    def n_assets(self) -> int:
        return self.spot.size

    @classmethod
    def independent(cls, spot, rate, sigma) -> "BlackScholesModel":
        sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
        d = sigma.size
        spot = np.broadcast_to(np.atleast_1d(np.asarray(spot, dtype=float)), (d,)).copy()
        return cls(spot=spot, rate=rate, sigma=sigma, corr=np.eye(d))

    def diffusion_factor(self) -> np.ndarray:
        """d x d log-coordinate diffusion: diag(sigma) times a triangular
        factor of the asset correlation (constant in time and state)."""
        return self.sigma[:, None] * correlation_factor(self.corr)


def simulate_bs_paths(
    model: BlackScholesModel,
    grid: TimeGrid,
    n: int,
    seeds: SeedSpec,
    antithetic: bool = True,
) -> PathBatch:
    """Log-Euler paths; ``dW`` keeps the standard independent increments.

    The correlation enters through the diffusion factor applied to the
    stored increments, so the same ``dW`` feeds the regression features.
    """
    if n < 1:
        raise ValueError("need at least one path")
    d = model.n_assets
    sigma_factor = model.diffusion_factor()
    dW = _standard_increments(grid, n, seeds, "bs-paths", n_factors=d, antithetic=antithetic)
    drift = (model.rate - 0.5 * model.sigma**2)[None, :] * grid.deltas[:, None]
    shocks = dW @ sigma_factor.T
    states = np.empty((n, grid.n_steps + 1, d))
    states[:, 0, :] = np.log(model.spot)
    np.cumsum(drift[None, :, :] + shocks, axis=1, out=states[:, 1:, :])
    states[:, 1:, :] += np.log(model.spot)[None, None, :]
    return PathBatch(states=states, dW=dW)


@dataclass(frozen=True)
class RoughBergomiModel:
    """Rough volatility model: variance is a Wick exponential of a
    Riemann-Liouville fractional Brownian motion with Hurst ``hurst``."""

    hurst: float
    eta: float
    rho: float
    rate: float
    spot: float
    forward_variance: Callable[[np.ndarray], np.ndarray] | float

    def __post_init__(self):
        if not 0.0 < self.hurst < 1.0:
            raise ValueError("hurst must lie in (0, 1)")
        if self.eta < 0.0:
            raise ValueError("eta must be nonnegative")
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [-1, 1]")
        if self.spot <= 0.0:
            raise ValueError("spot must be positive")

    @property
    def rho2(self) -> float:
        """Orthogonal correlation weight, recomputed from ``rho``."""
        return float(np.sqrt(max(1.0 - self.rho * self.rho, 0.0)))

    def xi0(self, t: np.ndarray) -> np.ndarray:
        """Forward variance curve evaluated at ``t`` (flat curves allowed)."""
        t = np.asarray(t, dtype=float)
        if callable(self.forward_variance):
            out = np.asarray(self.forward_variance(t), dtype=float)
            out = np.broadcast_to(out, t.shape)
        else:
            out = np.full(t.shape, float(self.forward_variance))
        if np.any(out <= 0.0):
            raise ValueError("forward variance must be positive on the grid")
        return out


@dataclass(frozen=True)
class VolterraKernelPlan:
    """Precomputed hybrid-scheme quantities for one grid and Hurst index.

    ``history_weights[i-1, j]`` multiplies the driver increment of step ``j``
    in the Volterra value at ``t_i`` (for ``j <= i-2``); the most recent
    interval uses the exact joint law of the increment and the kernel
    integral (``intra_cov`` / ``intra_var``).  Weights are fixed so that the
    implied variance of the Volterra process is ``t_i^{2H}`` exactly.
    """

    hurst: float
    grid: TimeGrid
    history_weights: np.ndarray
    intra_var: np.ndarray
    intra_cov: np.ndarray

    def implied_variance(self) -> np.ndarray:
        """Model variance of the simulated Volterra value at each grid time."""
        two_h = 2.0 * self.hurst
        out = np.zeros(self.grid.n_steps + 1)
        for i in range(1, self.grid.n_steps + 1):
            hist = self.history_weights[i - 1, : max(i - 1, 0)]
            out[i] = two_h * (
                self.intra_var[i - 1] + float(hist**2 @ self.grid.deltas[: max(i - 1, 0)])
            )
        return out


def build_volterra_plan(hurst: float, grid: TimeGrid) -> VolterraKernelPlan:
    """Hybrid discretization plan for the power kernel, exact in variance.

    The last-interval block stores ``intra_var = delta^{2H} / (2H)`` and
    ``intra_cov = delta^{H+1/2} / (H+1/2)`` (kernel-increment covariance).
    History weights take the root-mean-square of the kernel over each lag
    interval, which makes ``Var`` telescope to ``t^{2H}`` on any grid.
    """
    if not 0.0 < hurst < 1.0:
        raise ValueError(f"hurst must lie in (0, 1), got {hurst}")
    times = grid.times
    deltas = grid.deltas
    n = grid.n_steps
    two_h = 2.0 * hurst
    intra_var = deltas**two_h / two_h
    intra_cov = deltas ** (hurst + 0.5) / (hurst + 0.5)
    weights = np.zeros((n, n))
    for i in range(2, n + 1):
        j = np.arange(i - 1)
        lag_hi = times[i] - times[j]
        lag_lo = times[i] - times[j + 1]
        weights[i - 1, : i - 1] = np.sqrt(
            (lag_hi**two_h - lag_lo**two_h) / (two_h * deltas[j])
        )
    return VolterraKernelPlan(
        hurst=hurst,
        grid=grid,
        history_weights=weights,
        intra_var=intra_var,
        intra_cov=intra_cov,
    )


def simulate_rbergomi_paths(
    model: RoughBergomiModel,
    plan: VolterraKernelPlan,
    grid: TimeGrid,
    n: int,
    seeds: SeedSpec,
    antithetic: bool = True,
) -> PathBatch:
    """Joint log-price and variance paths under the hybrid plan.

    The variance path is adapted to the first driver only; ``dW`` stores the
    two independent standard increments ``(dW1, dW2)`` that the regressions
    reuse.  The log-price step is
    ``X_{i+1} = X_i + (r - V_i/2) delta_i + sqrt(V_i) (rho dW1 + rho2 dW2)``.
    """
    if n < 1:
        raise ValueError("need at least one path")
    if plan.grid is not grid and not np.array_equal(plan.grid.times, grid.times):
        raise ValueError("plan was built for a different grid")
    if not 0.0 < model.hurst < 1.0 or plan.hurst != model.hurst:
        raise ValueError("plan Hurst index does not match the model")
    n_steps = grid.n_steps
    draws = _standard_increments(
        grid, n, seeds, "rb-paths", n_factors=3, antithetic=antithetic
    )
    dW = draws[:, :, :2]
    dW1 = dW[:, :, 0]
    # Exact last-interval kernel integral, conditionally on the increment:
    # mean (c/delta) dW1, residual standard deviation sqrt(v - c^2/delta).
    # The algebraic form keeps the residual exactly zero at H = 1/2, where
    # the kernel integral and the increment coincide.
    h = model.hurst
    cond_slope = grid.deltas ** (h - 0.5) / (h + 0.5)
    resid_factor = np.sqrt(max(1.0 / (2.0 * h) - 1.0 / (h + 0.5) ** 2, 0.0))
    resid_sd = grid.deltas**h * resid_factor
    xi_std = draws[:, :, 2] / np.sqrt(grid.deltas)[None, :]
    kernel_integral = cond_slope[None, :] * dW1 + resid_sd[None, :] * xi_std
    volterra = np.zeros((n, n_steps + 1))
    volterra[:, 1:] = np.sqrt(2.0 * model.hurst) * (
        kernel_integral + dW1 @ plan.history_weights.T
    )
    t_pow = grid.times ** (2.0 * model.hurst)
    variance = model.xi0(grid.times)[None, :] * np.exp(
        model.eta * volterra - 0.5 * model.eta**2 * t_pow[None, :]
    )
    shocks = np.sqrt(variance[:, :-1]) * (model.rho * dW1 + model.rho2 * dW[:, :, 1])
    increments = (model.rate - 0.5 * variance[:, :-1]) * grid.deltas[None, :] + shocks
    states = np.empty((n, n_steps + 1, 1))
    states[:, 0, 0] = np.log(model.spot)
    np.cumsum(increments, axis=1, out=states[:, 1:, 0])
    states[:, 1:, 0] += np.log(model.spot)
    return PathBatch(states=states, dW=np.ascontiguousarray(dW), variance=variance)


def volterra_covariance(hurst: float, s: float, t: float) -> float:
    """Exact covariance of the normalized Volterra process by quadrature:
    ``2H * integral_0^{min(s,t)} (s-u)^{H-1/2} (t-u)^{H-1/2} du``.

    The algebraic endpoint singularity at ``u = min(s, t)`` is absorbed by
    the quadrature weight, so the rule converges cleanly for any Hurst.
    """
    lo, hi = (s, t) if s <= t else (t, s)
    if lo <= 0.0:
        return 0.0
    exponent = hurst - 0.5
    if lo == hi:
        value, _ = scipy.integrate.quad(
            lambda u: 1.0, 0.0, lo,
            weight="alg", wvar=(0.0, 2.0 * exponent),
            epsabs=1e-13, epsrel=1e-12, limit=500,
        )
    else:
        value, _ = scipy.integrate.quad(
            lambda u: (hi - u) ** exponent, 0.0, lo,
            weight="alg", wvar=(0.0, exponent),
            epsabs=1e-13, epsrel=1e-12, limit=500,
        )
    return 2.0 * hurst * value


def cholesky_volterra_oracle(
    hurst: float, grid: TimeGrid, n: int, seeds: SeedSpec
) -> np.ndarray:
    """Exact-law Gaussian draws of the Volterra process at the grid times.

    Test-scale oracle: builds the full covariance by adaptive quadrature and
    samples through its Cholesky factor.  Returns ``(n, N+1)`` with the
    zero value at ``t_0`` included.
    """
    if not 0.0 < hurst < 1.0:
        raise ValueError(f"hurst must lie in (0, 1), got {hurst}")
    times = grid.times[1:]
    m = times.size
    cov = np.empty((m, m))
    for i in range(m):
        for j in range(i, m):
            cov[i, j] = cov[j, i] = volterra_covariance(hurst, times[i], times[j])
    scale = float(np.mean(np.diag(cov)))
    factor = _spd_factor(cov, first_jitter=1e-12 * scale, max_jitter=1e-8 * scale)
    z = seeds.generator("volterra-oracle").standard_normal((n, m))
    out = np.zeros((n, m + 1))
    out[:, 1:] = z @ factor.T
    return out
