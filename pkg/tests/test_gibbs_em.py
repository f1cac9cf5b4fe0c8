import logging
import numpy as np
import pytest
from Config.Run import GibbsEmConfig
from Corpus import Corpus
from Errors import DegenerateInputError, UsageError
from GibbsEM import (
    GibbsEmSample,
    GibbsEmTrajectory,
    _window_change,
    eta_surrogate,
    fixed_point_alpha_lda,
    fixed_point_eta,
    fixed_point_gamma,
    gamma_surrogate,
    gibbs_em_run,
    lda_gibbs_em_run,
    m_step_clda,
    run_replicates,
    trajectories_frame,
)
from Model import CountStatistics, recompute_counts


def quick_config(**overrides):
    settings = {"samples": 2, "thin": 2, "burn_in": 4, "max_iterations": 3, "seed": 1}
    settings.update(overrides)
    return GibbsEmConfig(**settings)


@pytest.fixture
def sample():
    corpus = Corpus.from_documents([[0, 0, 1]])
    return GibbsEmSample(recompute_counts(corpus, [0, 0, 1], 2), np.array([[0.4, 0.6]]))


@pytest.fixture
def mixed_sample():
    # topic-word counts (6, 0) and (1, 1), document-topic counts (4, 0) and (2, 2):
    # overdispersed without being degenerate, so both maps have a finite positive fixed point
    corpus = Corpus.from_documents([[0, 0, 0, 0], [0, 0, 1, 0]])
    counts = recompute_counts(corpus, [0, 0, 0, 0, 0, 0, 1, 1], 2)
    return GibbsEmSample(counts, np.array([[0.5, 0.5]]))


def test_eta_step_by_hand(sample):
    # numerator 1/0.5 + 1/1.5 + 1/0.5, denominator (1 + 1/2) + 1
    assert fixed_point_eta([sample], 0.5) == pytest.approx(7.0 / 15.0)


def test_lda_alpha_step_by_hand(sample):
    # numerator (1 + 1/2) + 1, denominator 2 * (1/2 + 1/3 + 1/4)
    assert fixed_point_alpha_lda([sample], 1.0) == pytest.approx(15.0 / 13.0)


def test_single_term_vocabulary_keeps_eta():
    corpus = Corpus.from_documents([[0, 0], [0, 0, 0]])
    samples = [GibbsEmSample(recompute_counts(corpus, [0, 1, 1, 0, 1], 2), None)]
    assert fixed_point_eta(samples, 0.37) == pytest.approx(0.37)


def test_single_topic_keeps_gamma(tiny_corpus):
    counts = recompute_counts(tiny_corpus, np.zeros(tiny_corpus.num_tokens, dtype=np.int64), 1)
    samples = [GibbsEmSample(counts, np.ones((tiny_corpus.J, 1)))]
    assert fixed_point_gamma(samples, 2.3, tiny_corpus.collection_of) == pytest.approx(2.3)


def test_zero_counts_are_degenerate():
    empty = CountStatistics(
        np.zeros((1, 2), dtype=np.int64),
        np.zeros(1, dtype=np.int64),
        np.zeros((2, 3), dtype=np.int64),
        np.zeros(2, dtype=np.int64),
    )
    samples = [GibbsEmSample(empty, np.array([[0.5, 0.5]]))]
    with pytest.raises(DegenerateInputError):
        fixed_point_eta(samples, 1.0)
    with pytest.raises(DegenerateInputError):
        fixed_point_gamma(samples, 1.0, np.array([0]))
    with pytest.raises(DegenerateInputError):
        fixed_point_eta([], 1.0)


def test_fixed_points_maximize_their_surrogates(sample):
    collection_of = np.array([0])
    eta = fixed_point_eta([sample], 0.5)
    gamma = fixed_point_gamma([sample], 2.0, collection_of)
    for factor in (0.9, 0.99, 1.01, 1.1):
        assert eta_surrogate(eta, [sample], 0.5) >= eta_surrogate(eta * factor, [sample], 0.5)
        assert gamma_surrogate(gamma, [sample], 2.0, collection_of) >= gamma_surrogate(
            gamma * factor, [sample], 2.0, collection_of
        )


def test_m_step_reaches_a_fixed_point(mixed_sample):
    collection_of = np.array([0, 0])
    eta, gamma, settled = m_step_clda(
        [mixed_sample], 0.5, 2.0, collection_of, quick_config(inner_max_iterations=2000)
    )
    assert settled
    assert 0.05 < eta < 50 and 0.05 < gamma < 50
    assert fixed_point_eta([mixed_sample], eta) == pytest.approx(eta, rel=1e-5)
    assert fixed_point_gamma([mixed_sample], gamma, collection_of) == pytest.approx(gamma, rel=1e-5)


def test_m_step_reports_when_it_runs_out_of_iterations(sample, caplog):
    # every topic uses a single term here, so eta keeps shrinking towards zero
    with caplog.at_level(logging.WARNING, logger="GibbsEM"):
        eta, gamma, settled = m_step_clda(
            [sample], 0.5, 2.0, np.array([0]), quick_config(inner_max_iterations=3)
        )
    assert not settled
    assert eta < 0.5
    assert "M-step stopped after 3 iterations" in caplog.text


def test_unsettled_m_steps_are_counted(tiny_corpus):
    trajectory = gibbs_em_run(
        tiny_corpus, 2, quick_config(inner_max_iterations=1, inner_tolerance=1e-12), eta=0.5, gamma=1.5
    )
    assert trajectory.unsettled_m_steps == len(trajectory.rows) - 1


def test_window_convergence_and_tail_average():
    trajectory = GibbsEmTrajectory("clda")
    for outer, eta in enumerate([1.0, 0.6, 0.5, 0.52, 0.48, 0.515, 0.49]):
        trajectory.add(outer, eta=eta, gamma=1.0)
    # consecutive rows still move by about 5%, the means of the last two pairs by 0.5%
    assert _window_change(trajectory, 1) > 0.03
    assert _window_change(trajectory, 2) == pytest.approx(0.005, rel=1e-6)
    assert _window_change(trajectory, 4) == np.inf
    assert trajectory.tail_average(4) == {"eta": pytest.approx(0.50125), "gamma": 1.0}


def test_window_stops_the_outer_loop(tiny_corpus):
    trajectory = gibbs_em_run(
        tiny_corpus, 2, quick_config(max_iterations=6, window=2, tolerance=1e6), eta=0.5, gamma=1.5
    )
    # the first comparison needs two full windows, the initial row included
    assert trajectory.converged
    assert len(trajectory.rows) == 4


def test_trajectory_is_reproducible(tiny_corpus):
    first = gibbs_em_run(tiny_corpus, 2, quick_config(), eta=0.5, gamma=1.5)
    second = gibbs_em_run(tiny_corpus, 2, quick_config(), eta=0.5, gamma=1.5)
    assert first.rows == second.rows
    assert first.rows[0] == {"outer_iter": 0, "eta": 0.5, "gamma": 1.5}
    assert all(row["eta"] > 0 and row["gamma"] > 0 for row in first.rows)


def test_lda_trajectory(tiny_corpus):
    trajectory = lda_gibbs_em_run(tiny_corpus, 2, quick_config(), alpha=0.5, eta=0.5)
    assert trajectory.model == "lda"
    assert list(trajectory.to_frame().columns) == ["outer_iter", "alpha", "eta"]
    assert trajectory.final["alpha"] > 0


def test_replicates(tiny_corpus):
    trajectories = run_replicates(tiny_corpus, 2, quick_config(), replicates=2, eta=0.5, gamma=1.5)
    frame = trajectories_frame(trajectories)
    assert list(frame.columns) == ["replicate", "outer_iter", "eta", "gamma"]
    assert set(frame["replicate"]) == {0, 1}
    again = run_replicates(tiny_corpus, 2, quick_config(), replicates=2, eta=0.5, gamma=1.5)
    assert [t.rows for t in trajectories] == [t.rows for t in again]


def test_invalid_requests(tiny_corpus):
    with pytest.raises(UsageError):
        run_replicates(tiny_corpus, 2, quick_config(), model="hdp")
    with pytest.raises(UsageError):
        gibbs_em_run(tiny_corpus, 2, quick_config(), eta=0.0)


@pytest.mark.slow
def test_recovers_topic_concentration():
    from Config.Run import SynthConfig
    from Synthetic import generate

    corpus, truth = generate(
        SynthConfig(
            J=2, K=3, V=30, docs_per_collection=60, words_per_document=80,
            alpha=1.0, gamma=1.0, eta=0.5, seed=19,
        )
    )
    config = GibbsEmConfig(samples=5, thin=5, burn_in=100, max_iterations=15, seed=3)
    trajectory = gibbs_em_run(corpus, 3, config, eta=2.0, gamma=3.0)
    assert trajectory.final["eta"] == pytest.approx(0.5, rel=0.5)
