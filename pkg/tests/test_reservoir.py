import json

import numpy as np
import pytest

from rwnn_pde import (
    Readout,
    Reservoir,
    ReservoirConfig,
    SeedSpec,
    features,
    features_jacobian,
    net_eval,
    net_grad,
    reservoir_from_dict,
    reservoir_to_dict,
    sample_reservoir,
)


def _manual(weights, biases, connectivity=1.0, weight_range=10.0):
    weights = np.asarray(weights, dtype=float)
    biases = np.asarray(biases, dtype=float)
    config = ReservoirConfig(
        n_hidden=weights.shape[0],
        n_inputs=weights.shape[1],
        weight_range=weight_range,
        connectivity=connectivity,
    )
    return Reservoir(weights=weights, biases=biases, config=config)


def test_dense_sampling_bounds():
    config = ReservoirConfig(n_hidden=64, n_inputs=3, weight_range=0.7, connectivity=1.0)
    res = sample_reservoir(config, SeedSpec(1))
    assert np.count_nonzero(res.weights) == 64 * 3
    assert np.all(np.abs(res.weights) <= 0.7)
    assert np.all(np.abs(res.biases) <= 0.7)


def test_half_connectivity_exact_count():
    config = ReservoirConfig(n_hidden=100, n_inputs=1, connectivity=0.5)
    res = sample_reservoir(config, SeedSpec(2))
    assert np.count_nonzero(res.weights) == 50


def test_third_connectivity_rounding():
    config = ReservoirConfig(n_hidden=3, n_inputs=2, connectivity=1.0 / 3.0)
    res = sample_reservoir(config, SeedSpec(3))
    assert np.count_nonzero(res.weights) == 2


def test_sampling_deterministic():
    config = ReservoirConfig(n_hidden=16, n_inputs=2, connectivity=0.5)
    a = sample_reservoir(config, SeedSpec(4), 7)
    b = sample_reservoir(config, SeedSpec(4), 7)
    assert np.array_equal(a.weights, b.weights)
    assert np.array_equal(a.biases, b.biases)
    c = sample_reservoir(config, SeedSpec(4), 8)
    assert not np.array_equal(a.weights, c.weights)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(n_hidden=0, n_inputs=1),
        dict(n_hidden=1, n_inputs=0),
        dict(n_hidden=1, n_inputs=1, weight_range=0.0),
        dict(n_hidden=1, n_inputs=1, connectivity=0.0),
        dict(n_hidden=1, n_inputs=1, connectivity=1.2),
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        ReservoirConfig(**kwargs)


def test_features_relu_values():
    res = _manual([[2.0]], [-1.0])
    assert features(res, np.array([1.0])) == pytest.approx([1.0])
    assert features(res, np.array([0.0])) == pytest.approx([0.0])


def test_features_positive_homogeneity_without_bias():
    rng = np.random.default_rng(0)
    res = _manual(rng.uniform(-1, 1, (12, 4)), np.zeros(12))
    x = rng.standard_normal(4)
    assert np.allclose(features(res, 2.0 * x), 2.0 * features(res, x), rtol=1e-14)


def test_features_batch_matches_single():
    rng = np.random.default_rng(1)
    res = _manual(rng.uniform(-1, 1, (6, 3)), rng.uniform(-1, 1, 6))
    xs = rng.standard_normal((5, 3))
    batch = features(res, xs)
    for i in range(5):
        assert np.allclose(batch[i], features(res, xs[i]), rtol=1e-15)


def test_jacobian_active_and_kink():
    res = _manual([[2.0]], [-1.0])
    assert np.allclose(features_jacobian(res, np.array([1.0])), [[2.0]], atol=0.0)
    # At the kink (pre-activation exactly zero) the open-interval convention
    # yields a zero row.
    assert np.allclose(features_jacobian(res, np.array([0.5])), [[0.0]], atol=0.0)


def _finite_difference_jacobian(fn, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    out = []
    for j in range(x.size):
        bump = np.zeros_like(x)
        bump[j] = h
        out.append((fn(x + bump) - fn(x - bump)) / (2.0 * h))
    return np.stack(out, axis=-1)


def _point_away_from_kinks(res, rng, margin=1e-3):
    while True:
        x = rng.standard_normal(res.config.n_inputs)
        if np.min(np.abs(res.weights @ x + res.biases)) > margin:
            return x


def test_jacobian_matches_finite_differences():
    rng = np.random.default_rng(2)
    res = _manual(rng.uniform(-1, 1, (20, 3)), rng.uniform(-1, 1, 20), weight_range=1.0)
    for _ in range(5):
        x = _point_away_from_kinks(res, rng)
        approx = _finite_difference_jacobian(lambda p: features(res, p), x)
        exact = features_jacobian(res, x)
        assert np.allclose(approx, exact, rtol=1e-5, atol=1e-8)


def test_net_eval_examples():
    res = _manual([[2.0]], [-1.0])
    readout = Readout(theta=np.array([[3.0]]))
    assert net_eval(res, readout, np.array([1.0])) == pytest.approx([3.0])
    zero = Readout(theta=np.zeros((1, 1)))
    assert net_eval(res, zero, np.array([5.0])) == pytest.approx([0.0])


def test_net_eval_hand_instance():
    rng = np.random.default_rng(3)
    res = _manual(np.eye(2), np.zeros(2))
    readout = Readout(theta=np.array([[1.0, 0.0], [0.0, 2.0]]))
    value = net_eval(res, readout, np.array([0.5, 1.0]))
    assert value == pytest.approx([0.5, 2.0])


def test_net_eval_dimension_mismatch():
    res = _manual([[2.0]], [-1.0])
    with pytest.raises(ValueError):
        net_eval(res, Readout(theta=np.zeros((1, 3))), np.array([1.0]))
    with pytest.raises(ValueError):
        net_grad(res, Readout(theta=np.zeros((1, 3))), np.array([1.0]))


def test_net_grad_examples():
    res = _manual([[2.0]], [-1.0])
    readout = Readout(theta=np.array([[3.0]]))
    assert np.allclose(net_grad(res, readout, np.array([1.0])), [[6.0]], atol=0.0)
    # Dead region: every unit off.
    assert np.allclose(net_grad(res, readout, np.array([-1.0])), [[0.0]], atol=0.0)


def test_net_grad_matches_finite_differences():
    rng = np.random.default_rng(4)
    res = _manual(rng.uniform(-1, 1, (15, 2)), rng.uniform(-1, 1, 15))
    readout = Readout(theta=rng.standard_normal((3, 15)))
    for _ in range(5):
        x = _point_away_from_kinks(res, rng)
        approx = _finite_difference_jacobian(lambda p: net_eval(res, readout, p), x)
        exact = net_grad(res, readout, x)
        assert np.allclose(approx, exact, rtol=1e-5, atol=1e-8)


def test_global_lipschitz_bound():
    rng = np.random.default_rng(5)
    res = _manual(rng.uniform(-1, 1, (25, 4)), rng.uniform(-1, 1, 25))
    readout = Readout(theta=rng.standard_normal((2, 25)))
    bound = np.linalg.norm(readout.theta) * np.linalg.norm(res.weights)
    for _ in range(20):
        x, y = rng.standard_normal((2, 4))
        gap = np.linalg.norm(net_eval(res, readout, x) - net_eval(res, readout, y))
        assert gap <= bound * np.linalg.norm(x - y) + 1e-12


def test_serialization_round_trip():
    config = ReservoirConfig(n_hidden=8, n_inputs=2, weight_range=0.5, connectivity=0.75)
    res = sample_reservoir(config, SeedSpec(6))
    doc = json.loads(json.dumps(reservoir_to_dict(res)))
    back = reservoir_from_dict(doc)
    assert np.array_equal(back.weights, res.weights)
    assert np.array_equal(back.biases, res.biases)
    assert back.config == res.config
