"""Backward regression solver for the rough-volatility backward SPDE.

Two frozen bases per timestep approximate the value field and the
martingale-kernel field.  Both readouts are fitted jointly from one stacked
regression: with the affine driver the step reduces to

    Y_i  = U_{i+1}(X_{i+1}) + f~ delta_i
    X1_i = Phi_psi(X_i) (dW1_i - b delta_i)
    X2_i = (1 - a delta_i) Phi_u(X_i)
           + DPhi_u(X_i) sqrt(V_i) (dB_i - (b rho + c rho2) delta_i)

with ``dB = rho dW1 + rho2 dW2``, solved for the stacked readout
``[xi, theta]`` over the 2K features ``[X1; X2]``.  Only the value network
propagates backward; the kernel-field readouts are kept for the exposure
diagnostics of :func:`z_fields`.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .core import PathBatch, SeedSpec, TimeGrid, path_chunks
from .markovian import AffineDriver, StepDiagnostics, _coef_column, terminal_targets
from .models import RoughBergomiModel, build_volterra_plan, simulate_rbergomi_paths
from .reservoir import Readout, Reservoir, ReservoirConfig, sample_reservoir
from .ridge import MomentAccumulator, SingularSystemError, ridge_solve


@dataclass
class StepReadouts:
    """Joint solution of one backward step: ``theta`` reads the value
    network's basis, ``xi`` the kernel-field basis (each 1 x K)."""

    theta: np.ndarray
    xi: np.ndarray


@dataclass
class NonMarkovianSolve:
    """Per-step readout pairs and reservoir pairs, plus price and
    diagnostics; reservoir tuples are ordered ``(value, kernel-field)``."""

    step_readouts: list[StepReadouts]
    reservoirs: list[tuple[Reservoir, Reservoir]]
    grid: TimeGrid
    diagnostics: list[StepDiagnostics]
    price: float
    wall_time: float
    rho: float
    rho2: float


def build_features_nonmarkovian(
    res_value: Reservoir,
    res_kernel: Reservoir,
    driver: AffineDriver,
    model: RoughBergomiModel,
    grid: TimeGrid,
    paths: PathBatch,
    step: int,
    next_values: np.ndarray,
    rows: slice | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stacked-regression blocks ``(X1, X2, Y)`` for one timestep."""
    if paths.variance is None:
        raise ValueError("path batch is missing the variance path")
    if paths.dW is None or paths.dW.shape[2] != 2:
        raise ValueError("path batch must store the two driver increments")
    sel = rows if rows is not None else slice(None)
    t = float(grid.times[step])
    delta = float(grid.deltas[step])
    x = paths.states[sel, step, :]
    dW1 = paths.dW[sel, step, 0]
    dW2 = paths.dW[sel, step, 1]
    a = _coef_column(driver.a, t, x)
    b = _coef_column(driver.b, t, x)
    c = _coef_column(driver.c, t, x)
    sqrt_v = np.sqrt(paths.variance[sel, step])[:, None]
    phi_kernel = np.maximum(x @ res_kernel.weights.T + res_kernel.biases, 0.0)
    X1 = phi_kernel * (dW1[:, None] - b * delta)
    pre_value = x @ res_value.weights.T + res_value.biases
    phi_value = np.maximum(pre_value, 0.0)
    dB = model.rho * dW1 + model.rho2 * dW2
    drift_adj = (b * model.rho + c * model.rho2) * delta
    shock = sqrt_v * (dB[:, None] - drift_adj)
    # d = 1: the directional derivative is the masked weight column.
    noise = (shock * res_value.weights[:, 0][None, :]) * (pre_value > 0.0)
    X2 = (1.0 - a * delta) * phi_value + noise
    f_src = _coef_column(driver.f_tilde, t, x)
    Y = next_values[sel] + f_src * delta
    return X1, X2, Y


def backward_solve_nonmarkovian(
    model: RoughBergomiModel,
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
) -> NonMarkovianSolve:
    """Backward recursion with two fresh reservoirs per timestep.

    Targets for the next (earlier) step come from the value network only,
    clamped at zero when ``absorption`` is on; the price is the value
    network at the deterministic start state.
    """
    start = time.perf_counter()
    if paths is None:
        plan = build_volterra_plan(model.hurst, grid)
        paths = simulate_rbergomi_paths(
            model, plan, grid, n_paths, seeds.child("paths"), antithetic=antithetic
        )
    if paths.n_paths != n_paths:
        raise ValueError("path batch size does not match n_paths")
    n_steps = grid.n_steps
    config = ReservoirConfig(
        n_hidden=n_hidden,
        n_inputs=1,
        weight_range=weight_range,
        connectivity=connectivity,
    )
    values = terminal_targets(payoff, paths)
    if values.shape[1] != 1:
        raise ValueError("the rough-volatility solver prices one output at a time")
    step_readouts: list[StepReadouts | None] = [None] * n_steps
    reservoirs: list[tuple[Reservoir, Reservoir] | None] = [None] * n_steps
    diagnostics: list[StepDiagnostics] = []
    for step in range(n_steps - 1, -1, -1):
        step_start = time.perf_counter()
        res_value = sample_reservoir(config, seeds.child("value"), step)
        res_kernel = sample_reservoir(config, seeds.child("kernel-field"), step)
        acc = MomentAccumulator.zeros(2 * n_hidden, 1)
        for lo, hi in path_chunks(n_paths):
            X1, X2, Y = build_features_nonmarkovian(
                res_value, res_kernel, driver, model, grid, paths, step, values,
                rows=slice(lo, hi),
            )
            acc.accumulate(np.hstack([X1, X2]), Y)
        try:
            solution = ridge_solve(acc, ridge_lambda)
        except SingularSystemError as exc:
            raise SingularSystemError(
                f"step {step}: {exc}", gram_condition=exc.gram_condition
            ) from exc
        xi = solution.beta[:, :n_hidden]
        theta = solution.beta[:, n_hidden:]
        step_readouts[step] = StepReadouts(theta=theta, xi=xi)
        reservoirs[step] = (res_value, res_kernel)
        new_values = np.empty((n_paths, 1))
        for lo, hi in path_chunks(n_paths):
            phi = np.maximum(
                paths.states[lo:hi, step, :] @ res_value.weights.T + res_value.biases, 0.0
            )
            new_values[lo:hi] = phi @ theta.T
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
    x0 = np.array([np.log(model.spot)])
    res0 = reservoirs[0][0]
    phi0 = np.maximum(res0.weights @ x0 + res0.biases, 0.0)
    price = float((step_readouts[0].theta @ phi0)[0])
    if absorption:
        price = max(price, 0.0)
    return NonMarkovianSolve(
        step_readouts=step_readouts,
        reservoirs=reservoirs,
        grid=grid,
        diagnostics=diagnostics[::-1],
        price=price,
        wall_time=time.perf_counter() - start,
        rho=model.rho,
        rho2=model.rho2,
    )


def z_fields(solve: NonMarkovianSolve, step: int, x: float, v: float) -> tuple[float, float]:
    """Martingale exposures of the fitted fields at state ``x``, variance ``v``:

    ``z1 = xi Phi_psi(x) + rho sqrt(v) theta DPhi_u(x)`` and
    ``z2 = rho2 sqrt(v) theta DPhi_u(x)``.
    """
    res_value, res_kernel = solve.reservoirs[step]
    readouts = solve.step_readouts[step]
    point = np.atleast_1d(np.asarray(x, dtype=float))
    phi_kernel = np.maximum(res_kernel.weights @ point + res_kernel.biases, 0.0)
    pre_value = res_value.weights @ point + res_value.biases
    grad_value = float(
        readouts.theta[0] @ (res_value.weights[:, 0] * (pre_value > 0.0))
    )
    sqrt_v = float(np.sqrt(v))
    z1 = float(readouts.xi[0] @ phi_kernel) + solve.rho * sqrt_v * grad_value
    z2 = solve.rho2 * sqrt_v * grad_value
    return z1, z2
