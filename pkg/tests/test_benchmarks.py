import numpy as np
import pytest

from rwnn_pde import (
    BlackScholesModel,
    PathBatch,
    RoughBergomiModel,
    SeedSpec,
    basket_call,
    bs_closed_form,
    make_uniform_grid,
    mc_price,
    reference_price,
    simulate_bs_paths,
    vanilla_calls,
)

TABLE_TRUE = {
    0.05: 0.02521640,
    0.10: 0.04485236,
    0.15: 0.06459483,
    0.20: 0.08433319,
    0.25: 0.10403539,
}


def test_closed_form_reference_values():
    for sigma, value in TABLE_TRUE.items():
        assert bs_closed_form(1.0, 1.0, 0.01, sigma, 1.0) == pytest.approx(value, abs=1e-7)


def test_closed_form_zero_volatility_limit():
    assert bs_closed_form(1.0, 1.0, 0.01, 0.0, 1.0) == pytest.approx(
        1.0 - np.exp(-0.01), abs=1e-15
    )
    assert bs_closed_form(1.0, 2.0, 0.01, 0.0, 1.0) == 0.0
    assert bs_closed_form(1.2, 1.0, 0.05, 0.3, 0.0) == pytest.approx(0.2, abs=1e-15)


def test_closed_form_validation():
    with pytest.raises(ValueError):
        bs_closed_form(0.0, 1.0, 0.0, 0.1, 1.0)
    with pytest.raises(ValueError):
        bs_closed_form(1.0, 1.0, 0.0, -0.1, 1.0)


def test_payoff_shapes():
    x = np.log(np.array([[0.5, 2.0], [1.0, 1.0]]))
    calls = vanilla_calls(1.0)(x)
    assert calls.shape == (2, 2)
    assert np.allclose(calls, [[0.0, 1.0], [0.0, 0.0]])
    basket = basket_call(1.0)(x)
    assert basket.shape == (2, 1)
    assert basket[0, 0] == pytest.approx(0.25)
    weighted = basket_call(1.0, weights=np.array([1.0, 0.0]))(x)
    assert weighted[0, 0] == 0.0


def test_mc_constant_payoff_exact_discount():
    model = BlackScholesModel.independent(1.0, 0.04, [0.2])
    grid = make_uniform_grid(2.0, 3)
    paths = simulate_bs_paths(model, grid, 64, SeedSpec(1))
    report = mc_price(paths, lambda x: np.ones((x.shape[0], 1)), 0.04, 2.0)
    assert report.price == pytest.approx(np.exp(-0.08), abs=1e-15)
    assert report.std_error == 0.0


def test_mc_matches_closed_form_within_three_se():
    model = BlackScholesModel.independent(1.0, 0.01, [0.1])
    grid = make_uniform_grid(1.0, 21)
    paths = simulate_bs_paths(model, grid, 50_000, SeedSpec(2))
    report = mc_price(paths, vanilla_calls(1.0), 0.01, 1.0)
    truth = TABLE_TRUE[0.10]
    assert abs(report.price - truth) < 3.0 * report.std_error


def test_mc_invariant_under_path_permutation():
    model = BlackScholesModel.independent(1.0, 0.01, [0.2])
    grid = make_uniform_grid(1.0, 5)
    paths = simulate_bs_paths(model, grid, 5000, SeedSpec(3))
    report = mc_price(paths, vanilla_calls(1.0), 0.01, 1.0)
    perm = np.random.default_rng(0).permutation(5000)
    shuffled = PathBatch(states=paths.states[perm], dW=paths.dW[perm])
    report_perm = mc_price(shuffled, vanilla_calls(1.0), 0.01, 1.0)
    assert abs(report.price - report_perm.price) <= 1e-12


def test_mc_standard_error_scaling():
    model = BlackScholesModel.independent(1.0, 0.01, [0.2])
    grid = make_uniform_grid(1.0, 5)
    small = mc_price(
        simulate_bs_paths(model, grid, 4000, SeedSpec(4)), vanilla_calls(1.0), 0.01, 1.0
    )
    large = mc_price(
        simulate_bs_paths(model, grid, 16_000, SeedSpec(4)), vanilla_calls(1.0), 0.01, 1.0
    )
    ratio = small.std_error / large.std_error
    assert abs(ratio - 2.0) < 0.4


def test_mc_empty_batch_rejected():
    empty = PathBatch(states=np.zeros((0, 2, 1)), dW=np.zeros((0, 1, 1)))
    with pytest.raises(ValueError):
        mc_price(empty, vanilla_calls(1.0), 0.0, 1.0)


def test_reference_blocks_are_seamless():
    # Reference streaming must agree with a single-batch estimate of the
    # same law: compare against a one-shot run at matching size.
    model = BlackScholesModel.independent(1.0, 0.01, [0.2])
    report = reference_price(
        model, vanilla_calls(1.0), 1.0, 60_000, steps=20, seeds=SeedSpec(5)
    )
    assert report.std_error > 0.0
    truth = bs_closed_form(1.0, 1.0, 0.01, 0.2, 1.0)
    assert abs(report.price - truth) < 4.0 * report.std_error


def test_reference_degenerate_rough_model_matches_closed_form():
    model = RoughBergomiModel(
        hurst=0.5, eta=0.0, rho=-0.7, rate=0.01, spot=1.0, forward_variance=0.235**2
    )
    report = reference_price(
        model, vanilla_calls(1.0), 1.0, 60_000, steps=50, seeds=SeedSpec(6)
    )
    truth = bs_closed_form(1.0, 1.0, 0.01, 0.235, 1.0)
    assert abs(report.price - truth) < 3.0 * report.std_error
