import math
import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import gammaln
from scipy.stats import norm
from Config.Run import Hyperparameters, MgsConfig
from Errors import UsageError
from Numerics import is_simplex, make_rng
from inference.mgs import (
    MIN_MAGNITUDE,
    DualAveraging,
    grad_log_target,
    initial_varphi,
    log_target_varphi,
    mgs_run,
    mgs_step,
    mh_log_ratio,
    mmala_mean,
    mmala_propose,
    transition_log_density,
    varphi_to_pi,
)


@pytest.fixture
def n_dk():
    return np.array([[3, 0, 1], [2, 2, 0], [0, 1, 5]])


def short_config(**overrides):
    settings = {"iterations": 20, "burn_in": 10, "save_every": 5, "seed": 4, "epsilon": 0.1}
    settings.update(overrides)
    return MgsConfig(**settings)


def test_varphi_to_pi_uses_magnitudes():
    np.testing.assert_allclose(varphi_to_pi(np.array([1.0, -3.0])), [0.25, 0.75])
    assert is_simplex(varphi_to_pi(np.array([0.0, 2.0])))


@pytest.mark.parametrize("varphi", [[0.7, 1.3, 0.4], [-0.7, 1.3, 2.4], [0.05, -0.2, 3.0]])
def test_gradient_matches_finite_differences(n_dk, hyper, varphi):
    varphi = np.asarray(varphi)
    step = 1e-6
    numeric = np.empty(3)
    for k in range(3):
        shift = np.zeros(3)
        shift[k] = step
        numeric[k] = (
            log_target_varphi(varphi + shift, n_dk, hyper) - log_target_varphi(varphi - shift, n_dk, hyper)
        ) / (2 * step)
    np.testing.assert_allclose(grad_log_target(varphi, n_dk, hyper), numeric, rtol=1e-5, atol=1e-6)


def test_log_target_is_even_in_varphi(n_dk, hyper):
    varphi = np.array([0.7, 1.3, 0.4])
    flipped = varphi * np.array([1, -1, -1])
    assert log_target_varphi(flipped, n_dk, hyper) == pytest.approx(log_target_varphi(varphi, n_dk, hyper))


def test_prior_only_target(hyper):
    varphi = np.array([0.5, 2.0])
    expected = (hyper.alpha - 1) * (math.log(0.5) + math.log(2.0)) - 2.5
    assert log_target_varphi(varphi, np.zeros((0, 2)), hyper) == pytest.approx(expected)


def test_mmala_mean_by_hand():
    varphi = np.array([2.0, -0.5, 0.0])
    gradient = np.array([1.0, 2.0, -4.0])
    half = 0.5 * 0.2**2
    expected = [
        2.0 + half * 2.0 * 1.0 + half,
        -0.5 + half * 0.5 * 2.0 - half,
        0.0 + half * MIN_MAGNITUDE * -4.0 + half,
    ]
    np.testing.assert_allclose(mmala_mean(varphi, gradient, 0.2), expected)


def test_transition_density_is_diagonal_gaussian():
    origin = np.array([1.5, -0.8])
    gradient = np.array([0.3, -1.0])
    target = np.array([1.4, -0.6])
    epsilon = 0.3
    mean = mmala_mean(origin, gradient, epsilon)
    scale = epsilon * np.sqrt(np.abs(origin))
    expected = norm.logpdf(target, loc=mean, scale=scale).sum()
    assert transition_log_density(target, origin, gradient, epsilon) == pytest.approx(expected)


def test_proposal_ratio_matches_helper(n_dk, hyper):
    varphi = np.array([0.7, 1.3, 0.4])
    proposal = mmala_propose(
        make_rng(2), varphi, grad_log_target(varphi, n_dk, hyper), 0.2, lambda x: grad_log_target(x, n_dk, hyper)
    )
    manual = (
        log_target_varphi(proposal.varphi, n_dk, hyper)
        - log_target_varphi(varphi, n_dk, hyper)
        + proposal.reverse_log_density
        - proposal.forward_log_density
    )
    assert mh_log_ratio(varphi, proposal.varphi, n_dk, hyper, 0.2) == pytest.approx(manual)


def test_proposal_rejects_non_positive_step(n_dk, hyper, rng):
    varphi = np.array([0.7, 1.3, 0.4])
    with pytest.raises(UsageError):
        mmala_propose(rng, varphi, grad_log_target(varphi, n_dk, hyper), 0.0, lambda x: x)


def test_step_returns_consistent_pi(n_dk, hyper, rng):
    varphi = np.array([0.7, 1.3, 0.4])
    for _ in range(50):
        varphi, pi, accepted, probability = mgs_step(rng, varphi, n_dk, hyper, 0.1)
        np.testing.assert_allclose(pi, varphi_to_pi(varphi))
        assert is_simplex(pi)
        assert isinstance(accepted, bool)
        assert 0.0 <= probability <= 1.0


def test_dual_averaging_moves_toward_target():
    at_target = DualAveraging(0.01)
    assert at_target.update(0.574) == pytest.approx(0.1)
    growing = DualAveraging(0.01)
    shrinking = DualAveraging(0.01)
    for _ in range(50):
        large = growing.update(1.0)
        small = shrinking.update(0.0)
    assert large > small
    assert growing.final_epsilon > shrinking.final_epsilon


def test_dual_averaging_state_round_trip():
    adaptation = DualAveraging(0.05)
    adaptation.update(0.3)
    restored = DualAveraging.from_state(adaptation.state())
    assert restored.update(0.9) == adaptation.update(0.9)


def test_initial_varphi_carries_pi(rng):
    pi = np.array([[0.2, 0.8], [0.5, 0.5]])
    varphi = initial_varphi(rng, pi, 0.5)
    np.testing.assert_allclose(varphi / varphi.sum(axis=1, keepdims=True), pi)


def test_run_records_acceptance(tiny_corpus, hyper):
    trace = mgs_run(tiny_corpus, 3, hyper, short_config())
    assert len(trace.acceptance_rate) == 20
    assert all(0.0 <= rate <= 1.0 for rate in trace.acceptance_rate)
    assert trace.diagnostics["proposals"] == 20 * tiny_corpus.J
    assert is_simplex(trace.final.pi)
    assert len(trace.final.extra["varphi"]) == tiny_corpus.J
    frame = trace.to_frame()
    assert list(frame.columns) == ["iteration", "log_joint", "acceptance_rate", "epsilon", "seconds"]


def test_step_size_frozen_after_burn_in(tiny_corpus, hyper):
    trace = mgs_run(tiny_corpus, 2, hyper, short_config(adapt_epsilon=True))
    assert len(set(trace.epsilon[9:])) == 1
    assert trace.epsilon[9] != 0.1


def test_fixed_step_size_without_adaptation(tiny_corpus, hyper):
    trace = mgs_run(tiny_corpus, 2, hyper, short_config())
    assert set(trace.epsilon) == {0.1}


def test_resume_matches_uninterrupted_run(tiny_corpus, hyper):
    full = mgs_run(tiny_corpus, 2, hyper, short_config(adapt_epsilon=True))
    first = mgs_run(tiny_corpus, 2, hyper, short_config(iterations=12, adapt_epsilon=True))
    resumed = mgs_run(tiny_corpus, 2, hyper, short_config(adapt_epsilon=True), init=first.final)
    assert resumed.log_joint == full.log_joint[12:]
    assert resumed.diagnostics == full.diagnostics
    np.testing.assert_array_equal(resumed.final.pi, full.final.pi)


def test_same_seed_same_chain(tiny_corpus, hyper):
    first = mgs_run(tiny_corpus, 2, hyper, short_config())
    second = mgs_run(tiny_corpus, 2, hyper, short_config())
    assert first.log_joint == second.log_joint


@pytest.mark.slow
def test_prior_only_chain_has_gamma_magnitudes():
    """With no documents |varphi_k| is Gamma(alpha, 1), so its mean is alpha."""
    h = Hyperparameters(alpha=2.0, gamma=1.0, eta=1.0)
    rng = make_rng(8)
    empty = np.zeros((0, 3))
    varphi = np.array([1.0, 2.0, 3.0])
    magnitudes = []
    for i in range(40_000):
        varphi, _, _, _ = mgs_step(rng, varphi, empty, h, 0.8)
        if i >= 2_000:
            magnitudes.append(np.abs(varphi))
    assert np.mean(magnitudes) == pytest.approx(2.0, abs=0.15)


def test_gradient_at_random_states():
    rng = make_rng(31)
    for _ in range(120):
        K = int(rng.integers(2, 6))
        h = Hyperparameters(alpha=rng.uniform(0.3, 3.0), gamma=rng.uniform(0.3, 5.0), eta=1.0)
        n_dk = rng.integers(0, 8, size=(int(rng.integers(1, 5)), K))
        varphi = rng.uniform(0.2, 3.0, size=K) * rng.choice([-1.0, 1.0], size=K)
        numeric = np.empty(K)
        for k in range(K):
            shift = np.zeros(K)
            shift[k] = 1e-6
            numeric[k] = (
                log_target_varphi(varphi + shift, n_dk, h) - log_target_varphi(varphi - shift, n_dk, h)
            ) / 2e-6
        np.testing.assert_allclose(grad_log_target(varphi, n_dk, h), numeric, rtol=1e-4, atol=1e-5)


@pytest.mark.slow
def test_mixture_updates_sample_the_conditional_of_pi():
    """Mean of pi_1 under repeated MMALA steps against quadrature over the 1-simplex."""
    h = Hyperparameters(alpha=1.5, gamma=2.0, eta=1.0)
    n_dk = np.array([[3, 1], [0, 2], [2, 2]])

    def density(p):
        concentration = h.gamma * np.array([p, 1.0 - p])
        data = np.sum(gammaln(concentration + n_dk) - gammaln(concentration))
        return math.exp(data + (h.alpha - 1.0) * (math.log(p) + math.log(1.0 - p)))

    exact = quad(lambda p: p * density(p), 0.0, 1.0)[0] / quad(density, 0.0, 1.0)[0]

    rng = make_rng(12)
    varphi = np.array([1.0, 1.0])
    draws = []
    for i in range(60_000):
        varphi, pi, _, _ = mgs_step(rng, varphi, n_dk, h, 0.5)
        if i >= 2_000:
            draws.append(pi[0])
    assert np.mean(draws) == pytest.approx(exact, abs=0.01)
