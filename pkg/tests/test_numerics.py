import math
import numpy as np
import pytest
from Errors import NumericsDomainError
from Numerics import (
    digamma,
    dirichlet_expectation,
    gammaln,
    is_simplex,
    make_rng,
    normalize_log_weights,
    restore_rng,
    rng_state,
    sample_categorical,
    sample_dirichlet,
    spawn_rngs,
    tetragamma,
    to_simplex,
    trigamma,
)

EULER_GAMMA = 0.5772156649015329


def test_digamma_known_values():
    assert digamma(1.0) == pytest.approx(-EULER_GAMMA, abs=1e-12)
    assert digamma(0.5) == pytest.approx(-EULER_GAMMA - 2 * math.log(2), abs=1e-12)
    assert digamma(2.0) - digamma(1.0) == pytest.approx(1.0, abs=1e-12)


def test_trigamma_and_tetragamma_known_values():
    assert trigamma(1.0) == pytest.approx(math.pi**2 / 6, rel=1e-10)
    assert trigamma(4.0) - trigamma(3.0) == pytest.approx(-1.0 / 9.0, rel=1e-10)
    assert tetragamma(1.0) == pytest.approx(-2.4041138063191885, rel=1e-10)
    step = 1e-5
    finite_difference = (trigamma(1.0 + step) - trigamma(1.0 - step)) / (2 * step)
    assert tetragamma(1.0) == pytest.approx(finite_difference, rel=1e-6)


def test_recurrences_hold_on_log_grid():
    x = np.logspace(-3, 3, 200)
    np.testing.assert_allclose(digamma(x + 1) - digamma(x), 1.0 / x, rtol=1e-9)
    np.testing.assert_allclose(trigamma(x + 1) - trigamma(x), -1.0 / x**2, rtol=1e-9)
    np.testing.assert_allclose(tetragamma(x + 1) - tetragamma(x), 2.0 / x**3, rtol=1e-9)
    np.testing.assert_allclose(gammaln(x + 1) - gammaln(x), np.log(x), rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize("function", [digamma, trigamma, tetragamma, gammaln])
@pytest.mark.parametrize("x", [0.0, -1.0, np.array([1.0, -2.0])])
def test_special_functions_reject_non_positive(function, x):
    with pytest.raises(NumericsDomainError):
        function(x)


def test_scalar_input_returns_float():
    assert isinstance(digamma(3), float)
    assert digamma(np.array([1.0, 2.0])).shape == (2,)


def test_same_seed_same_stream():
    a = make_rng(42).random(5)
    b = make_rng(42).random(5)
    np.testing.assert_array_equal(a, b)


def test_spawned_streams_are_reproducible_and_distinct():
    first = [r.random() for r in spawn_rngs(5, 3)]
    second = [r.random() for r in spawn_rngs(5, 3)]
    assert first == second
    assert len(set(first)) == 3


def test_rng_state_round_trip():
    rng = make_rng(3)
    rng.random(10)
    state = rng_state(rng)
    expected = rng.random(4)
    np.testing.assert_array_equal(restore_rng(state).random(4), expected)


def test_sample_dirichlet_is_on_simplex(rng):
    for _ in range(50):
        params = rng.uniform(0.01, 5.0, size=rng.integers(2, 8))
        assert is_simplex(sample_dirichlet(rng, params))


def test_sample_dirichlet_mean(rng):
    draws = sample_dirichlet(rng, np.tile([2.0, 6.0], (100_000, 1)))
    np.testing.assert_allclose(draws.mean(axis=0), [0.25, 0.75], atol=0.01)


def test_sample_dirichlet_one_dimensional(rng):
    np.testing.assert_array_equal(sample_dirichlet(rng, [5.0]), [1.0])


def test_sample_dirichlet_tiny_parameters_stay_positive(rng):
    draws = sample_dirichlet(rng, np.full((1000, 3), 1e-3))
    assert np.all(draws > 0)
    assert is_simplex(draws)


@pytest.mark.parametrize("params", [[1.0, 0.0], [1.0, -2.0], []])
def test_sample_dirichlet_rejects_bad_parameters(rng, params):
    with pytest.raises(NumericsDomainError):
        sample_dirichlet(rng, params)


def test_sample_categorical_single_support(rng):
    assert all(sample_categorical(rng, [0, 0, 3, 0]) == 2 for _ in range(100))


def test_sample_categorical_frequencies(rng):
    draws = [sample_categorical(rng, [1, 2, 7]) for _ in range(100_000)]
    assert np.mean(np.asarray(draws) == 2) == pytest.approx(0.7, abs=0.01)


@pytest.mark.parametrize("weights", [[0, 0], [1, -1], []])
def test_sample_categorical_rejects_bad_weights(rng, weights):
    with pytest.raises(NumericsDomainError):
        sample_categorical(rng, weights)


def test_to_simplex_and_log_weights():
    np.testing.assert_allclose(to_simplex([1, 3]), [0.25, 0.75])
    np.testing.assert_allclose(normalize_log_weights([1000.0, 1000.0]), [0.5, 0.5])
    with pytest.raises(NumericsDomainError):
        to_simplex([0, 0])


def test_dirichlet_expectation_matches_digamma():
    params = np.array([[1.0, 2.0], [0.5, 0.5]])
    expected = digamma(params) - digamma(params.sum(axis=1))[:, None]
    np.testing.assert_allclose(dirichlet_expectation(params), expected)
