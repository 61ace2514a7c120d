"""Reproduction harness: canned pricing experiments with JSON/CSV output.

Five experiment ids are supported:

- ``bs-calls``: d independent at-the-money calls priced in one multi-output
  backward solve, with and without absorption, against closed forms and the
  same-path Monte-Carlo estimate.
- ``bs-basket``: correlated five-asset basket call against a self-computed
  high-resolution reference.
- ``rb-call``: rough-volatility at-the-money call against a self-computed
  reference.
- ``bs-convergence`` / ``rb-convergence``: hidden-node sweeps with repeated
  runs, per-size mean squared error and the fitted log-log slope.

``scaling_table`` re-runs the ``bs-calls`` pricing core across dimensions
and records total MSE and wall time per dimension.

Every run derives all randomness from ``(seed, experiment id)`` namespaces
and pins the BLAS thread pools to a fixed count, so a config plus seed maps
to byte-identical result documents (wall-clock fields aside) at any host
thread setting.
"""

from __future__ import annotations

import csv
import io
import json
import os
import time
from dataclasses import dataclass, field, asdict

import numpy as np
from threadpoolctl import threadpool_limits

from .benchmarks import (
    PriceReport,
    basket_call,
    bs_closed_form,
    mc_price,
    reference_price,
    vanilla_calls,
)
from .core import SeedSpec, make_uniform_grid
from .markovian import AffineDriver, backward_solve_markovian
from .models import (
    BlackScholesModel,
    RoughBergomiModel,
    build_volterra_plan,
    simulate_bs_paths,
    simulate_rbergomi_paths,
)
from .nonmarkovian import backward_solve_nonmarkovian
from .reservoir import reservoir_to_dict

EXPERIMENTS = ("bs-convergence", "bs-calls", "bs-basket", "rb-call", "rb-convergence")

SCHEMA_VERSION = 1

# The five-asset correlation matrix of the basket study.
BASKET_CORRELATION = np.array(
    [
        [1.00, 0.84, -0.51, -0.70, 0.15],
        [0.84, 1.00, -0.66, -0.85, 0.41],
        [-0.51, -0.66, 1.00, 0.55, -0.82],
        [-0.70, -0.85, 0.55, 1.00, -0.51],
        [0.15, 0.41, -0.82, -0.51, 1.00],
    ]
)

_SWEEP_NODES = (10, 100, 1000)


def _blas_thread_pin() -> int:
    return int(os.environ.get("RWNN_PDE_BLAS_THREADS", "2"))


@dataclass
class ExperimentConfig:
    """Settings of one harness run; defaults mirror the benchmark setups
    (21 steps, 50k paths, connectivity 0.5, or 1.0 with absorption for the
    convergence sweeps)."""

    experiment: str
    steps: int = 21
    paths: int = 50_000
    nodes: tuple[int, ...] | int | None = None
    connectivity: float | None = None
    weight_range: float = 1.0
    ridge: float | None = None
    absorption: bool | None = None
    seed: int = 0
    repeats: int = 20
    dimension: int = 5
    rate: float = 0.01
    spot: float = 1.0
    strike: float = 1.0
    maturity: float = 1.0
    hurst: float = 0.3
    eta: float = 1.9
    rho: float = -0.7
    xi0: float = 0.235**2
    reference_paths: int | None = None
    reference_steps: int = 100
    antithetic: bool = True
    dump_weights: str | None = None
    dump_paths: str | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(
                f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}"
            )
        if isinstance(self.nodes, int):
            self.nodes = (self.nodes,)
        elif self.nodes is not None:
            self.nodes = tuple(int(k) for k in self.nodes)

    @property
    def is_sweep(self) -> bool:
        return self.experiment.endswith("-convergence")

    def resolved_nodes(self) -> tuple[int, ...]:
        if self.nodes is not None:
            return self.nodes
        return _SWEEP_NODES if self.is_sweep else (100,)

    def resolved_connectivity(self) -> float:
        if self.connectivity is not None:
            return self.connectivity
        return 1.0 if self.is_sweep else 0.5

    def resolved_absorption(self) -> bool:
        # The sweeps follow the benchmark protocol and clamp by default.
        return True if self.absorption is None else self.absorption


def run_experiment(config: ExperimentConfig) -> dict:
    """Execute one experiment and return its JSON-ready result document."""
    with threadpool_limits(limits=_blas_thread_pin()):
        if config.experiment == "bs-calls":
            return _run_bs_calls(config)
        if config.experiment == "bs-basket":
            return _run_bs_basket(config)
        if config.experiment == "rb-call":
            return _run_rb_call(config)
        return _run_convergence(config)


def rel_error(reference: float, estimate: float) -> float:
    """Signed relative error, reference in the numerator:
    ``(reference - estimate) / reference``."""
    return (reference - estimate) / reference


def _sigma_grid(dimension: int) -> np.ndarray:
    # The five-asset study uses the 0.05-spaced column of the benchmark
    # tables; other dimensions spread volatilities uniformly over the same
    # overall range.
    if dimension == 5:
        return np.array([0.05, 0.10, 0.15, 0.20, 0.25])
    return np.linspace(0.05, 0.40, dimension)


def _settings_doc(config: ExperimentConfig) -> dict:
    doc = asdict(config)
    doc["nodes"] = list(config.resolved_nodes())
    doc["connectivity"] = config.resolved_connectivity()
    doc.pop("dump_weights")
    doc.pop("dump_paths")
    return doc


def _jsonify(value):
    if isinstance(value, dict):
        return {k: _jsonify(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonify(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonify(v) for v in value.tolist()]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


def _run_bs_calls(config: ExperimentConfig) -> dict:
    doc, _ = _bs_calls_core(config)
    return doc


def _bs_calls_core(config: ExperimentConfig) -> tuple[dict, dict]:
    """Shared by ``bs-calls`` and the dimension-scaling table."""
    n_hidden = config.resolved_nodes()[0]
    sigma = _sigma_grid(config.dimension)
    model = BlackScholesModel.independent(config.spot, config.rate, sigma)
    grid = make_uniform_grid(config.maturity, config.steps)
    driver = AffineDriver.pricing(config.rate)
    payoff = vanilla_calls(config.strike)
    root = SeedSpec(config.seed).child("bs-calls")
    solver_seeds = root.child("solver")
    t0 = time.perf_counter()
    paths = simulate_bs_paths(
        model, grid, config.paths, solver_seeds.child("paths"),
        antithetic=config.antithetic,
    )
    sim_time = time.perf_counter() - t0
    solves = {}
    for label, absorb in (("with_absorption", True), ("without_absorption", False)):
        solves[label] = backward_solve_markovian(
            model, driver, payoff, grid, config.paths, n_hidden,
            weight_range=config.weight_range,
            connectivity=config.resolved_connectivity(),
            ridge_lambda=config.ridge,
            absorption=absorb,
            seeds=solver_seeds,
            paths=paths,
        )
    mc_report = mc_price(paths, payoff, config.rate, config.maturity)
    true_prices = np.array(
        [
            bs_closed_form(config.spot, config.strike, config.rate, s, config.maturity)
            for s in sigma
        ]
    )
    prices = {
        "pde_with_absorption": np.atleast_1d(solves["with_absorption"].price),
        "pde_without_absorption": np.atleast_1d(solves["without_absorption"].price),
        "mc": np.atleast_1d(mc_report.price),
    }
    rel_errors = {
        key: [rel_error(t, p) for t, p in zip(true_prices, vals)]
        for key, vals in prices.items()
    }
    total_mse = {
        key: float(np.sum((np.asarray(vals) - true_prices) ** 2))
        for key, vals in prices.items()
        if key.startswith("pde")
    }
    doc = {
        "schema": SCHEMA_VERSION,
        "experiment": config.experiment,
        "seed": config.seed,
        "settings": _settings_doc(config),
        "sigma": sigma,
        "true_prices": true_prices,
        "pde_with_absorption": prices["pde_with_absorption"],
        "pde_without_absorption": prices["pde_without_absorption"],
        "mc": prices["mc"],
        "mc_std_error": np.atleast_1d(mc_report.std_error),
        "rel_errors": rel_errors,
        "total_mse": total_mse,
        "wall_times": {
            "simulation": sim_time,
            "solve_with_absorption": solves["with_absorption"].wall_time,
            "solve_without_absorption": solves["without_absorption"].wall_time,
        },
    }
    _maybe_dump_weights(config, solves["without_absorption"])
    _maybe_dump_paths(config, paths)
    return _jsonify(doc), solves


def _run_bs_basket(config: ExperimentConfig) -> dict:
    n_hidden = config.resolved_nodes()[0]
    sigma = np.linspace(0.05, 0.25, 5)
    model = BlackScholesModel(
        spot=np.full(5, config.spot),
        rate=config.rate,
        sigma=sigma,
        corr=BASKET_CORRELATION,
    )
    strike = config.strike
    grid = make_uniform_grid(config.maturity, config.steps)
    driver = AffineDriver.pricing(config.rate)
    payoff = basket_call(strike)
    root = SeedSpec(config.seed).child("bs-basket")
    n_ref = config.reference_paths or 400_000
    reference = reference_price(
        model, payoff, config.maturity, n_ref,
        steps=config.reference_steps, seeds=root, antithetic=config.antithetic,
    )
    solver_seeds = root.child("solver")
    paths = simulate_bs_paths(
        model, grid, config.paths, solver_seeds.child("paths"),
        antithetic=config.antithetic,
    )
    solves = {}
    for label, absorb in (("with_absorption", True), ("without_absorption", False)):
        solves[label] = backward_solve_markovian(
            model, driver, payoff, grid, config.paths, n_hidden,
            weight_range=config.weight_range,
            connectivity=config.resolved_connectivity(),
            ridge_lambda=config.ridge,
            absorption=absorb,
            seeds=solver_seeds,
            paths=paths,
        )
    mc_report = mc_price(paths, payoff, config.rate, config.maturity)
    prices = {
        "pde_with_absorption": float(solves["with_absorption"].price),
        "pde_without_absorption": float(solves["without_absorption"].price),
        "mc": float(mc_report.price),
    }
    doc = {
        "schema": SCHEMA_VERSION,
        "experiment": config.experiment,
        "seed": config.seed,
        "settings": _settings_doc(config),
        "reference": reference.price,
        "reference_std_error": reference.std_error,
        **prices,
        "mc_std_error": float(mc_report.std_error),
        "rel_errors": {
            key: rel_error(reference.price, val) for key, val in prices.items()
        },
        "wall_times": {
            "reference": reference.wall_time,
            "solve_with_absorption": solves["with_absorption"].wall_time,
            "solve_without_absorption": solves["without_absorption"].wall_time,
        },
    }
    _maybe_dump_weights(config, solves["without_absorption"])
    _maybe_dump_paths(config, paths)
    return _jsonify(doc)


def _rb_model(config: ExperimentConfig) -> RoughBergomiModel:
    return RoughBergomiModel(
        hurst=config.hurst,
        eta=config.eta,
        rho=config.rho,
        rate=config.rate,
        spot=config.spot,
        forward_variance=config.xi0,
    )


def _run_rb_call(config: ExperimentConfig) -> dict:
    n_hidden = config.resolved_nodes()[0]
    model = _rb_model(config)
    grid = make_uniform_grid(config.maturity, config.steps)
    driver = AffineDriver.pricing(config.rate)
    payoff = vanilla_calls(config.strike)
    root = SeedSpec(config.seed).child("rb-call")
    n_ref = config.reference_paths or 800_000
    reference = reference_price(
        model, payoff, config.maturity, n_ref,
        steps=config.reference_steps, seeds=root, antithetic=config.antithetic,
    )
    solver_seeds = root.child("solver")
    plan = build_volterra_plan(model.hurst, grid)
    paths = simulate_rbergomi_paths(
        model, plan, grid, config.paths, solver_seeds.child("paths"),
        antithetic=config.antithetic,
    )
    solves = {}
    for label, absorb in (("with_absorption", True), ("without_absorption", False)):
        solves[label] = backward_solve_nonmarkovian(
            model, driver, payoff, grid, config.paths, n_hidden,
            weight_range=config.weight_range,
            connectivity=config.resolved_connectivity(),
            ridge_lambda=config.ridge,
            absorption=absorb,
            seeds=solver_seeds,
            paths=paths,
        )
    mc_report = mc_price(paths, payoff, config.rate, config.maturity)
    prices = {
        "pde_with_absorption": float(solves["with_absorption"].price),
        "pde_without_absorption": float(solves["without_absorption"].price),
        "mc": float(mc_report.price),
    }
    doc = {
        "schema": SCHEMA_VERSION,
        "experiment": config.experiment,
        "seed": config.seed,
        "settings": _settings_doc(config),
        "reference": reference.price,
        "reference_std_error": reference.std_error,
        **prices,
        "mc_std_error": float(mc_report.std_error),
        "rel_errors": {
            key: rel_error(reference.price, val) for key, val in prices.items()
        },
        "wall_times": {
            "reference": reference.wall_time,
            "solve_with_absorption": solves["with_absorption"].wall_time,
            "solve_without_absorption": solves["without_absorption"].wall_time,
        },
    }
    _maybe_dump_weights(config, solves["without_absorption"])
    _maybe_dump_paths(config, paths)
    return _jsonify(doc)


def _run_convergence(config: ExperimentConfig) -> dict:
    """Hidden-node sweep: repeated solves per size against a fixed target."""
    rough = config.experiment == "rb-convergence"
    grid = make_uniform_grid(config.maturity, config.steps)
    driver = AffineDriver.pricing(config.rate)
    payoff = vanilla_calls(config.strike)
    root = SeedSpec(config.seed).child(config.experiment)
    wall_times: dict = {}
    if rough:
        model = _rb_model(config)
        n_ref = config.reference_paths or 800_000
        reference = reference_price(
            model, payoff, config.maturity, n_ref,
            steps=config.reference_steps, seeds=root, antithetic=config.antithetic,
        )
        target = float(reference.price)
        wall_times["reference"] = reference.wall_time
        reference_doc = {
            "reference": target,
            "reference_std_error": float(reference.std_error),
        }
    else:
        sigma_single = 0.1
        model = BlackScholesModel.independent(config.spot, config.rate, sigma_single)
        target = bs_closed_form(
            config.spot, config.strike, config.rate, sigma_single, config.maturity
        )
        reference_doc = {"reference": target}
    absorb = config.resolved_absorption()
    records = []
    for n_hidden in config.resolved_nodes():
        sweep_start = time.perf_counter()
        mses = []
        for rep in range(config.repeats):
            seeds = root.child(f"nodes{n_hidden}").child(f"rep{rep}")
            if rough:
                solve = backward_solve_nonmarkovian(
                    model, driver, payoff, grid, config.paths, n_hidden,
                    weight_range=config.weight_range,
                    connectivity=config.resolved_connectivity(),
                    ridge_lambda=config.ridge,
                    absorption=absorb,
                    seeds=seeds,
                    antithetic=config.antithetic,
                )
            else:
                solve = backward_solve_markovian(
                    model, driver, payoff, grid, config.paths, n_hidden,
                    weight_range=config.weight_range,
                    connectivity=config.resolved_connectivity(),
                    ridge_lambda=config.ridge,
                    absorption=absorb,
                    seeds=seeds,
                    antithetic=config.antithetic,
                )
            price = float(np.atleast_1d(solve.price)[0])
            mses.append((price - target) ** 2)
        mses_arr = np.asarray(mses)
        records.append(
            {
                "nodes": n_hidden,
                "mse": mses,
                "mean_mse": float(mses_arr.mean()),
                "q10": float(np.quantile(mses_arr, 0.1)),
                "q90": float(np.quantile(mses_arr, 0.9)),
            }
        )
        wall_times[f"nodes{n_hidden}"] = time.perf_counter() - sweep_start
    doc = {
        "schema": SCHEMA_VERSION,
        "experiment": config.experiment,
        "seed": config.seed,
        "settings": _settings_doc(config),
        **reference_doc,
        "absorption": absorb,
        "records": records,
        "wall_times": wall_times,
    }
    if len(records) >= 2:
        doc["slope"] = fit_loglog_slope(
            [(rec["nodes"], rec["mean_mse"]) for rec in records]
        )
    return _jsonify(doc)


def fit_loglog_slope(records) -> float:
    """Ordinary least-squares slope of log(MSE) against log(node count)."""
    points = [(float(k), float(m)) for k, m in records]
    if len({k for k, _ in points}) < 2:
        raise ValueError("need at least two distinct node counts")
    log_k = np.log([k for k, _ in points])
    log_m = np.log([m for _, m in points])
    return float(np.polyfit(log_k, log_m, 1)[0])


def scaling_table(
    dims=(5, 10, 25, 50, 100), config: ExperimentConfig | None = None
) -> list[tuple[int, float, float]]:
    """Total MSE and solve wall time per asset-count, Table-2 style.

    Each dimension re-runs the ``bs-calls`` pricing core (so the d=5 row
    coincides with the ``bs-calls`` experiment at equal seeds); the MSE
    column follows the configured absorption variant.
    """
    base = config or ExperimentConfig(experiment="bs-calls")
    rows = []
    for d in dims:
        run_config = ExperimentConfig(
            experiment="bs-calls",
            steps=base.steps,
            paths=base.paths,
            nodes=base.resolved_nodes(),
            connectivity=base.resolved_connectivity(),
            weight_range=base.weight_range,
            ridge=base.ridge,
            absorption=base.absorption,
            seed=base.seed,
            dimension=d,
            rate=base.rate,
            spot=base.spot,
            strike=base.strike,
            maturity=base.maturity,
            antithetic=base.antithetic,
        )
        with threadpool_limits(limits=_blas_thread_pin()):
            doc, solves = _bs_calls_core(run_config)
        variant = (
            "with_absorption" if base.resolved_absorption() else "without_absorption"
        )
        rows.append(
            (
                d,
                doc["total_mse"][f"pde_{variant}"],
                solves[variant].wall_time,
            )
        )
    return rows


def _maybe_dump_weights(config: ExperimentConfig, solve) -> None:
    if not config.dump_weights:
        return
    steps = []
    if hasattr(solve, "readouts"):
        for i, (res, readout) in enumerate(zip(solve.reservoirs, solve.readouts)):
            steps.append(
                {
                    "step": i,
                    "reservoir": reservoir_to_dict(res),
                    "readout": readout.theta.tolist(),
                }
            )
    else:
        for i, ((res_u, res_psi), readouts) in enumerate(
            zip(solve.reservoirs, solve.step_readouts)
        ):
            steps.append(
                {
                    "step": i,
                    "value_reservoir": reservoir_to_dict(res_u),
                    "kernel_reservoir": reservoir_to_dict(res_psi),
                    "value_readout": readouts.theta.tolist(),
                    "kernel_readout": readouts.xi.tolist(),
                }
            )
    payload = {"schema": SCHEMA_VERSION, "steps": steps}
    with open(config.dump_weights, "w", encoding="utf-8") as handle:
        json.dump(payload, handle)


def _maybe_dump_paths(config: ExperimentConfig, paths) -> None:
    if not config.dump_paths:
        return
    d = paths.n_assets
    header = ["path", "time_index"] + [f"state{j}" for j in range(d)]
    if paths.variance is not None:
        header.append("variance")
    with open(config.dump_paths, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        n, n_times, _ = paths.states.shape
        for p in range(n):
            for i in range(n_times):
                row = [p, i] + [repr(v) for v in paths.states[p, i, :]]
                if paths.variance is not None:
                    row.append(repr(paths.variance[p, i]))
                writer.writerow(row)


def result_to_csv(doc: dict) -> str:
    """Flatten a result document into CSV rows (per sigma, per repeat, or
    per scaling row depending on the experiment)."""
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    if "records" in doc:
        writer.writerow(["nodes", "repeat", "mse", "mean_mse", "q10", "q90"])
        for rec in doc["records"]:
            for rep, mse in enumerate(rec["mse"]):
                writer.writerow(
                    [rec["nodes"], rep, repr(mse), repr(rec["mean_mse"]),
                     repr(rec["q10"]), repr(rec["q90"])]
                )
    elif "sigma" in doc:
        writer.writerow(
            ["sigma", "true", "pde_with_abs", "pde_without_abs", "mc",
             "rel_err_with_abs", "rel_err_without_abs", "rel_err_mc"]
        )
        for i, s in enumerate(doc["sigma"]):
            writer.writerow(
                [
                    repr(s),
                    repr(doc["true_prices"][i]),
                    repr(doc["pde_with_absorption"][i]),
                    repr(doc["pde_without_absorption"][i]),
                    repr(doc["mc"][i]),
                    repr(doc["rel_errors"]["pde_with_absorption"][i]),
                    repr(doc["rel_errors"]["pde_without_absorption"][i]),
                    repr(doc["rel_errors"]["mc"][i]),
                ]
            )
    else:
        writer.writerow(["quantity", "value"])
        for key in (
            "reference", "pde_with_absorption", "pde_without_absorption", "mc",
        ):
            if key in doc:
                writer.writerow([key, repr(doc[key])])
    return buffer.getvalue()
