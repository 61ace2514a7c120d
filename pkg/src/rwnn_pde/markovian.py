"""Backward regression solver for Markovian pricing PDEs with affine drivers.

Each timestep fits one linear readout over a fresh frozen random basis: the
regression target is the next-step value estimate plus the driver source
term, the regressors combine the feature vector and its directional
derivative along the simulated noise.  With the affine driver
``f = a y + b z + f~`` the step reduces to the feature/target pair

    Y_i = U_{i+1}(X_{i+1}) + f~ delta_i
    X_i = (1 - a delta_i) Phi(X_i) + DPhi(X_i) Sigma (b delta_i + dW_i),

solved by ridge least squares; the time-zero value of the step-0 network is
the price.  The optional absorption variant clamps every intermediate value
estimate (and the final price) at zero.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import CHUNK_SIZE, PathBatch, SeedSpec, TimeGrid, path_chunks
from .models import BlackScholesModel, simulate_bs_paths
from .reservoir import Readout, Reservoir, ReservoirConfig, sample_reservoir
from .ridge import MomentAccumulator, SingularSystemError, ridge_solve

CoefFn = Callable[[float, np.ndarray], np.ndarray | float]


@dataclass(frozen=True)
class AffineDriver:
    """Affine driver ``f(t, x, y, z1, z2) = a y + b z1 + c z2 + f~``.

    Coefficients are callables of ``(t, x)`` with ``x`` a batch of states
    ``(n, d)``; ``None`` means identically zero.  ``a`` and ``f_tilde``
    return scalars or ``(n,)`` arrays, ``b`` and ``c`` return whatever
    conforms with the z-arguments of the backward equation (a ``d``-vector
    for the Markovian case, scalars for the one-dimensional non-Markovian
    case).  Markovian problems use ``c = None``.
    """

    a: CoefFn | None = None
    b: CoefFn | None = None
    c: CoefFn | None = None
    f_tilde: CoefFn | None = None

    @classmethod
    def pricing(cls, rate: float) -> "AffineDriver":
        """Plain discounting driver ``f = -r y``."""
        return cls(a=lambda t, x: -rate)


def _coef_column(fn: CoefFn | None, t: float, x: np.ndarray):
    """Evaluate a scalar coefficient as a broadcastable column (or scalar)."""
    if fn is None:
        return 0.0
    value = fn(t, x)
    if np.isscalar(value):
        return float(value)
    value = np.asarray(value, dtype=float)
    return value[:, None] if value.ndim == 1 else value


def _coef_rowvec(fn: CoefFn | None, t: float, x: np.ndarray):
    """Evaluate a z-coefficient; scalar, ``(d,)`` or ``(n, d)`` results all
    broadcast against the increment rows."""
    if fn is None:
        return None
    value = fn(t, x)
    return float(value) if np.isscalar(value) else np.asarray(value, dtype=float)


@dataclass
class StepDiagnostics:
    """Per-step regression health: condition number, residual, timing."""

    step: int
    gram_condition: float
    residual_norm: float
    wall_time: float


@dataclass
class MarkovianSolve:
    """Backward-solve result: one readout and reservoir per timestep,
    the time-zero price, and per-step diagnostics."""

    readouts: list[Readout]
    reservoirs: list[Reservoir]
    grid: TimeGrid
    diagnostics: list[StepDiagnostics]
    price: float | np.ndarray
    wall_time: float


def terminal_targets(payoff, paths: PathBatch) -> np.ndarray:
    """Payoff evaluated on terminal states, as an ``(n, m)`` target array.

    No absorption is applied here: call payoffs are already nonnegative.
    """
    values = np.asarray(payoff(paths.states[:, -1, :]), dtype=float)
    return values[:, None] if values.ndim == 1 else values


def build_features_markovian(
    res: Reservoir,
    driver: AffineDriver,
    grid: TimeGrid,
    paths: PathBatch,
    step: int,
    next_values: np.ndarray,
    diffusion: np.ndarray,
    rows: slice | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Regression pair ``(X, Y)`` for one timestep (optionally a row block).

    ``diffusion`` is the d x d log-coordinate diffusion factor at the step
    (constant for Black-Scholes); the stored standard increments of the path
    batch supply the noise direction.
    """
    if paths.dW is None:
        raise ValueError("path batch is missing the Brownian increments")
    sel = rows if rows is not None else slice(None)
    t = float(grid.times[step])
    delta = float(grid.deltas[step])
    x = paths.states[sel, step, :]
    pre = x @ res.weights.T + res.biases
    phi = np.maximum(pre, 0.0)
    a = _coef_column(driver.a, t, x)
    b = _coef_rowvec(driver.b, t, x)
    shift = paths.dW[sel, step, :]
    if b is not None:
        shift = shift + b * delta
    noise = ((shift @ diffusion.T) @ res.weights.T) * (pre > 0.0)
    X = (1.0 - a * delta) * phi + noise
    f_src = _coef_column(driver.f_tilde, t, x)
    Y = next_values[sel] + f_src * delta
    return X, Y


def backward_solve_markovian(
    model: BlackScholesModel,
    driver: AffineDriver,
    payoff,
    grid: TimeGrid,
    n_paths: int,
    n_hidden: int,
    *,
    weight_range: float = 1.0,
    connectivity: float = 1.0,
    ridge_lambda: float | None = None,
    absorption: bool = False,
    seeds: SeedSpec,
    paths: PathBatch | None = None,
    antithetic: bool = True,
) -> MarkovianSolve:
    """Run the full backward recursion and return readouts plus the price.

    A fresh independent reservoir is drawn per timestep.  ``paths`` may be
    supplied to share one simulation across several solves (for instance
    with and without absorption); otherwise paths are simulated here from
    the ``"paths"`` sub-namespace of ``seeds``.
    """
    start = time.perf_counter()
    if paths is None:
        paths = simulate_bs_paths(
            model, grid, n_paths, seeds.child("paths"), antithetic=antithetic
        )
    if paths.n_paths != n_paths:
        raise ValueError("path batch size does not match n_paths")
    n_steps = grid.n_steps
    diffusion = model.diffusion_factor()
    config = ReservoirConfig(
        n_hidden=n_hidden,
        n_inputs=model.n_assets,
        weight_range=weight_range,
        connectivity=connectivity,
    )
    values = terminal_targets(payoff, paths)
    n_outputs = values.shape[1]
    readouts: list[Readout | None] = [None] * n_steps
    reservoirs: list[Reservoir | None] = [None] * n_steps
    diagnostics: list[StepDiagnostics] = []
    for step in range(n_steps - 1, -1, -1):
        step_start = time.perf_counter()
        res = sample_reservoir(config, seeds, step)
        acc = MomentAccumulator.zeros(n_hidden, n_outputs)
        for lo, hi in path_chunks(n_paths):
            X, Y = build_features_markovian(
                res, driver, grid, paths, step, values, diffusion, rows=slice(lo, hi)
            )
            acc.accumulate(X, Y)
        try:
            solution = ridge_solve(acc, ridge_lambda)
        except SingularSystemError as exc:
            raise SingularSystemError(
                f"step {step}: {exc}", gram_condition=exc.gram_condition
            ) from exc
        readout = Readout(theta=solution.beta)
        readouts[step] = readout
        reservoirs[step] = res
        # Value estimates at this step feed the next (earlier) regression.
        new_values = np.empty((n_paths, n_outputs))
        for lo, hi in path_chunks(n_paths):
            phi = np.maximum(
                paths.states[lo:hi, step, :] @ res.weights.T + res.biases, 0.0
            )
            new_values[lo:hi] = phi @ solution.beta.T
        if absorption:
            np.maximum(new_values, 0.0, out=new_values)
        values = new_values
        diagnostics.append(
            StepDiagnostics(
                step=step,
                gram_condition=solution.gram_condition,
                residual_norm=solution.residual_norm,
                wall_time=time.perf_counter() - step_start,
            )
        )
    x0 = np.log(model.spot)
    phi0 = np.maximum(reservoirs[0].weights @ x0 + reservoirs[0].biases, 0.0)
    price = readouts[0].theta @ phi0
    if absorption:
        price = np.maximum(price, 0.0)
    price = float(price[0]) if price.size == 1 else price
    return MarkovianSolve(
        readouts=readouts,
        reservoirs=reservoirs,
        grid=grid,
        diagnostics=diagnostics[::-1],
        price=price,
        wall_time=time.perf_counter() - start,
    )
