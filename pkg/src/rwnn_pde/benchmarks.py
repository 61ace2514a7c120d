"""Reference prices: closed forms, payoffs and Monte-Carlo estimators.

Payoff callables act on terminal log-states ``(n, d)`` and return ``(n, m)``
target arrays, so the same objects feed the backward solvers, the plain
Monte-Carlo estimator and the high-resolution reference runs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .core import PathBatch, SeedSpec, make_uniform_grid
from .models import (
    BlackScholesModel,
    RoughBergomiModel,
    build_volterra_plan,
    simulate_bs_paths,
    simulate_rbergomi_paths,
)

# Block size for streaming reference runs; keeps peak memory flat while the
# draws stay a pure function of the seed (blocks use disjoint namespaces).
_REFERENCE_BLOCK = 25_000


@dataclass
class PriceReport:
    """One priced quantity with its Monte-Carlo error bar and timing."""

    price: float | np.ndarray
    std_error: float | np.ndarray
    wall_time: float
    meta: dict = field(default_factory=dict)


def bs_closed_form(spot: float, strike: float, rate: float, sigma: float, maturity: float) -> float:
    """European call price under Black-Scholes.

    The normal CDF is evaluated through ``scipy.special.ndtr`` (erfc based,
    accurate to double precision); the zero-volatility and zero-maturity
    limits return the discounted intrinsic value.
    """
    if spot <= 0.0 or strike <= 0.0:
        raise ValueError("spot and strike must be positive")
    if sigma < 0.0 or maturity < 0.0:
        raise ValueError("sigma and maturity must be nonnegative")
    stdev = sigma * np.sqrt(maturity)
    discount = np.exp(-rate * maturity)
    if stdev == 0.0:
        return float(max(spot - strike * discount, 0.0))
    d1 = (np.log(spot / strike) + (rate + 0.5 * sigma**2) * maturity) / stdev
    d2 = d1 - stdev
    return float(spot * ndtr(d1) - strike * discount * ndtr(d2))


def vanilla_calls(strike: float):
    """Per-asset call payoff on log-states: column j is ``(e^{x_j} - K)^+``."""

    def payoff(log_states: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(log_states)
        return np.maximum(np.exp(x) - strike, 0.0)

    return payoff


def basket_call(strike: float, weights: np.ndarray | None = None):
    """Weighted-basket call payoff; equal weights by default. Output (n, 1)."""

    def payoff(log_states: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(log_states)
        w = np.full(x.shape[1], 1.0 / x.shape[1]) if weights is None else np.asarray(weights)
        basket = np.exp(x) @ w
        return np.maximum(basket - strike, 0.0)[:, None]

    return payoff


def mc_price(paths: PathBatch, payoff, rate: float, maturity: float) -> PriceReport:
    """Discounted sample mean of the terminal payoff over a path batch.

    ``std_error`` is the discounted sample standard deviation over sqrt(n);
    scalar outputs come back as floats, multi-output payoffs as arrays.
    """
    if paths.n_paths == 0:
        raise ValueError("empty path batch")
    start = time.perf_counter()
    values = np.atleast_2d(payoff(paths.states[:, -1, :]))
    discount = np.exp(-rate * maturity)
    price = discount * values.mean(axis=0)
    if values.shape[0] > 1:
        spread = values.std(axis=0, ddof=1)
    else:
        spread = np.zeros(values.shape[1])
    std_error = discount * spread / np.sqrt(values.shape[0])
    elapsed = time.perf_counter() - start
    if price.size == 1:
        return PriceReport(float(price[0]), float(std_error[0]), elapsed)
    return PriceReport(price, std_error, elapsed)


def reference_price(
    model: BlackScholesModel | RoughBergomiModel,
    payoff,
    maturity: float,
    n_ref: int,
    steps: int = 100,
    seeds: SeedSpec | None = None,
    antithetic: bool = True,
) -> PriceReport:
    """High-resolution Monte-Carlo reference (default 100 time steps).

    Runs in blocks with disjoint seed namespaces so arbitrarily many paths
    stream through bounded memory.  Reference runs should use a seed
    namespace of their own, separate from any solver run.
    """
    if n_ref < 2:
        raise ValueError("reference runs need at least two paths")
    seeds = seeds if seeds is not None else SeedSpec(0)
    seeds = seeds.child("reference")
    grid = make_uniform_grid(maturity, steps)
    start = time.perf_counter()
    plan = None
    if isinstance(model, RoughBergomiModel):
        plan = build_volterra_plan(model.hurst, grid)
    total = None
    total_sq = None
    count = 0
    block_idx = 0
    remaining = n_ref
    while remaining > 0:
        size = min(_REFERENCE_BLOCK, remaining)
        block_seeds = seeds.child(f"block{block_idx}")
        if plan is None:
            batch = simulate_bs_paths(model, grid, size, block_seeds, antithetic=antithetic)
        else:
            batch = simulate_rbergomi_paths(
                model, plan, grid, size, block_seeds, antithetic=antithetic
            )
        values = np.atleast_2d(payoff(batch.states[:, -1, :]))
        if total is None:
            total = values.sum(axis=0)
            total_sq = (values**2).sum(axis=0)
        else:
            total += values.sum(axis=0)
            total_sq += (values**2).sum(axis=0)
        count += values.shape[0]
        remaining -= size
        block_idx += 1
    discount = np.exp(-model.rate * grid.maturity)
    mean = total / count
    var = np.maximum(total_sq / count - mean**2, 0.0) * count / (count - 1)
    price = discount * mean
    std_error = discount * np.sqrt(var / count)
    elapsed = time.perf_counter() - start
    meta = {"steps": steps, "paths": n_ref, "antithetic": antithetic}
    if price.size == 1:
        return PriceReport(float(price[0]), float(std_error[0]), elapsed, meta)
    return PriceReport(price, std_error, elapsed, meta)
