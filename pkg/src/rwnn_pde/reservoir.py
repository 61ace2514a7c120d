"""Frozen random ReLU bases and the linear readouts trained on top of them.

A reservoir is a fixed affine map ``x -> relu(A x + b)`` whose entries are
drawn once from Uniform[-R, R] and never trained; only readout matrices
multiplying the feature vector are fitted.  The almost-everywhere Jacobian
uses the left-continuous kink convention ``H(0) = 0`` (indicator of the open
half-line), so evaluations are exact and testable at the kink.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SeedSpec


@dataclass(frozen=True)
class ReservoirConfig:
    """Shape and sampling law of a frozen random basis.

    ``connectivity`` is the fraction of entries of the weight matrix kept
    nonzero; exactly ``round(connectivity * n_hidden * n_inputs)`` entries
    survive the mask.  Biases are never masked.
    """

    n_hidden: int
    n_inputs: int
    weight_range: float = 1.0
    connectivity: float = 1.0

    def __post_init__(self):
        if self.n_hidden < 1:
            raise ValueError("n_hidden must be >= 1")
        if self.n_inputs < 1:
            raise ValueError("n_inputs must be >= 1")
        if not self.weight_range > 0.0:
            raise ValueError("weight_range must be positive")
        if not 0.0 < self.connectivity <= 1.0:
            raise ValueError("connectivity must lie in (0, 1]")


@dataclass(frozen=True)
class Reservoir:
    """Sampled frozen basis: ``weights`` is K x d, ``biases`` has length K."""

    weights: np.ndarray
    biases: np.ndarray
    config: ReservoirConfig


@dataclass(frozen=True)
class Readout:
    """Trained linear map from K features to m outputs (m x K matrix)."""

    theta: np.ndarray


def sample_reservoir(config: ReservoirConfig, seeds: SeedSpec, *indices: int) -> Reservoir:
    """Draw a reservoir; deterministic given ``(config, seeds, indices)``.

    Weights and biases are iid Uniform[-R, R]; a uniformly random set of
    positions of the weight matrix is zeroed so that exactly
    ``round(c * K * d)`` entries remain nonzero.
    """
    K, d = config.n_hidden, config.n_inputs
    rng = seeds.generator("reservoir", *indices)
    radius = config.weight_range
    weights = rng.uniform(-radius, radius, size=(K, d))
    biases = rng.uniform(-radius, radius, size=K)
    keep = int(round(config.connectivity * K * d))
    if keep < K * d:
        dropped = rng.choice(K * d, size=K * d - keep, replace=False)
        weights.flat[dropped] = 0.0
    return Reservoir(weights=weights, biases=biases, config=config)


def features(res: Reservoir, x: np.ndarray) -> np.ndarray:
    """Evaluate ``relu(A x + b)``; accepts one point ``(d,)`` or a batch ``(n, d)``."""
    x = np.asarray(x, dtype=float)
    pre = x @ res.weights.T + res.biases
    return np.maximum(pre, 0.0)


def features_jacobian(res: Reservoir, x: np.ndarray) -> np.ndarray:
    """A.e. Jacobian at a single point: row k is ``A_k`` where the unit is
    active (``A_k x + b_k > 0``) and zero otherwise.  Shape K x d."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("features_jacobian expects a single d-vector")
    pre = res.weights @ x + res.biases
    return res.weights * (pre > 0.0)[:, None]


def net_eval(res: Reservoir, readout: Readout, x: np.ndarray) -> np.ndarray:
    """Readout applied to the feature vector: ``Theta relu(A x + b)``.

    Returns ``(m,)`` for a single point or ``(n, m)`` for a batch.
    """
    theta = np.asarray(readout.theta, dtype=float)
    if theta.ndim != 2 or theta.shape[1] != res.config.n_hidden:
        raise ValueError(
            f"readout shape {theta.shape} incompatible with {res.config.n_hidden} hidden units"
        )
    return features(res, x) @ theta.T


def net_grad(res: Reservoir, readout: Readout, x: np.ndarray) -> np.ndarray:
    """Gradient of the readout network at a single point; shape m x d."""
    theta = np.asarray(readout.theta, dtype=float)
    if theta.ndim != 2 or theta.shape[1] != res.config.n_hidden:
        raise ValueError(
            f"readout shape {theta.shape} incompatible with {res.config.n_hidden} hidden units"
        )
    return theta @ features_jacobian(res, x)


def reservoir_to_dict(res: Reservoir) -> dict:
    """JSON-ready dump of the frozen weights (see ``--dump-weights``)."""
    return {
        "weights": res.weights.tolist(),
        "biases": res.biases.tolist(),
        "config": {
            "n_hidden": res.config.n_hidden,
            "n_inputs": res.config.n_inputs,
            "weight_range": res.config.weight_range,
            "connectivity": res.config.connectivity,
        },
    }


def reservoir_from_dict(doc: dict) -> Reservoir:
    config = ReservoirConfig(**doc["config"])
    return Reservoir(
        weights=np.asarray(doc["weights"], dtype=float),
        biases=np.asarray(doc["biases"], dtype=float),
        config=config,
    )
