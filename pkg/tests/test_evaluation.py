import math
import numpy as np
import pytest
from Config.Run import Hyperparameters
from Corpus import Corpus, Vocabulary
from Errors import DataError, UsageError
from Evaluation import (
    align_mixtures,
    align_topics,
    aligned_l1,
    autocorrelation,
    coherence_frame,
    effective_sample_size,
    iterations_to_region,
    mixing_diagnostics,
    perplexity_clda,
    perplexity_from_estimates,
    perplexity_lda,
    perplexity_trajectory,
    perplexity_vem,
    presence_matrix,
    rao_blackwell_clda,
    top_words,
    topic_coherence,
    topic_distance_matrix,
    topic_size,
)
from Model import recompute_counts
from inference.vem import VariationalParams


def test_single_term_vocabulary_has_unit_perplexity(hyper):
    train = Corpus.from_documents([[0, 0], [0]])
    samples = [(np.array([0, 1, 0]), np.array([[0.5, 0.5]]))]
    assert perplexity_clda(train, [0, 1], [0, 0], samples, hyper, 2) == pytest.approx(1.0)


def test_untrained_symmetric_model_has_vocabulary_perplexity(tiny_corpus):
    """All counts zero and uniform priors predict every term with 1/V."""
    empty = Corpus.from_documents([[0]] * 5, collection_of=[0, 0, 1, 1, 1], vocabulary=tiny_corpus.vocabulary, J=2)
    counts = recompute_counts(empty, np.zeros(5, dtype=np.int64), 2)
    counts.m_kv[:] = 0
    counts.m_k[:] = 0
    estimate = rao_blackwell_clda(counts, np.full((2, 2), 0.5), empty.collection_of, Hyperparameters(alpha=1, gamma=1, eta=0.3))
    assert perplexity_from_estimates([0, 1, 2], [1, 2, 3], [estimate]) == pytest.approx(4.0)


def test_perplexity_averages_probabilities_over_samples(tiny_corpus, hyper):
    first = (np.zeros(tiny_corpus.num_tokens, dtype=np.int64), np.array([[0.5, 0.5], [0.5, 0.5]]))
    second = (np.ones(tiny_corpus.num_tokens, dtype=np.int64), np.array([[0.3, 0.7], [0.9, 0.1]]))
    docs, words = np.array([0, 2, 4]), np.array([1, 3, 2])
    estimates = [
        rao_blackwell_clda(recompute_counts(tiny_corpus, z, 2), pi, tiny_corpus.collection_of, hyper)
        for z, pi in (first, second)
    ]
    p = np.mean([e.word_probabilities(docs, words) for e in estimates], axis=0)
    expected = math.exp(-np.mean(np.log(p)))
    assert perplexity_clda(tiny_corpus, docs, words, [first, second], hyper, 2) == pytest.approx(expected)


def test_lda_perplexity_is_finite(tiny_corpus, rng):
    z = rng.integers(0, 3, tiny_corpus.num_tokens)
    value = perplexity_lda(tiny_corpus, [0, 1], [2, 3], [z], 0.5, 0.25, 3)
    assert 1.0 < value < math.inf


def test_vem_plug_in_perplexity():
    params = VariationalParams(
        lam=np.array([[1.0, 3.0], [3.0, 1.0]]),
        a=np.array([2.0]),
        omega=np.array([[0.5, 0.5]]),
        rho=np.array([[1.0, 1.0]]),
        phi=np.zeros((0, 2)),
    )
    # every word has probability 0.5 * 0.25 + 0.5 * 0.75
    assert perplexity_vem([0, 0], [0, 1], params) == pytest.approx(2.0)


def test_empty_test_set(hyper, tiny_corpus):
    with pytest.raises(DataError):
        perplexity_clda(tiny_corpus, [], [], [(np.zeros(13, dtype=np.int64), np.full((2, 2), 0.5))], hyper, 2)


def test_perplexity_trajectory(tiny_corpus, hyper):
    estimates = [
        rao_blackwell_clda(recompute_counts(tiny_corpus, np.full(13, k), 2), np.full((2, 2), 0.5), tiny_corpus.collection_of, hyper)
        for k in range(2)
    ]
    frame = perplexity_trajectory([0, 1], [1, 2], [10, 20], estimates)
    assert list(frame.columns) == ["iteration", "perplexity"]
    assert frame["iteration"].tolist() == [10, 20]


@pytest.fixture
def coherence_corpus():
    """Term 0 in 5 of 6 documents, term 1 in 1, never together with term 2."""
    return Corpus.from_documents([[0], [0], [0], [0], [0, 1], [2]])


def test_coherence_by_hand(coherence_corpus):
    beta = np.array([[0.6, 0.4, 0.0], [0.1, 0.0, 0.9]])
    scores = topic_coherence(beta, coherence_corpus, m=2)
    # topic 0: top words (0, 1): log((1 + 1) / 5); topic 1: (2, 0): log((0 + 1) / 1)
    np.testing.assert_allclose(scores, [math.log(2 / 5), 0.0])


def test_coherence_with_repeated_pair():
    corpus = Corpus.from_documents([[0, 1], [0, 1], [0, 1], [0, 1], [0, 1], [0]])
    scores = topic_coherence(np.array([[0.5, 0.5]]), corpus, m=2)
    np.testing.assert_allclose(scores, [math.log(6 / 6)])
    assert topic_coherence(np.array([[0.3, 0.7]]), corpus, m=2)[0] == pytest.approx(math.log(6 / 5))


def test_single_word_coherence_is_zero(coherence_corpus):
    np.testing.assert_array_equal(topic_coherence(np.array([[0.2, 0.3, 0.5]]), coherence_corpus, m=1), [0.0])


def test_coherence_rejects_unused_top_word():
    corpus_with_gap = Corpus.from_documents([[0], [1]], vocabulary=Vocabulary(["a", "b", "c"]))
    with pytest.raises(DataError):
        topic_coherence(np.array([[0.1, 0.2, 0.7]]), corpus_with_gap, m=2)


def test_top_words_ties_prefer_smaller_ids():
    np.testing.assert_array_equal(top_words(np.array([[0.25, 0.25, 0.5, 0.0]]), 3), [[2, 0, 1]])
    with pytest.raises(UsageError):
        top_words(np.array([[0.5, 0.5]]), 3)


def test_presence_ignores_repeats(tiny_corpus):
    presence = presence_matrix(tiny_corpus).toarray()
    assert presence.max() == 1.0
    np.testing.assert_array_equal(presence.sum(axis=0), [3, 2, 3, 2])


def test_topic_size_and_frame(coherence_corpus):
    sizes = topic_size([0, 0, 1, 0], 3)
    np.testing.assert_array_equal(sizes, [3, 1, 0])
    beta = np.array([[0.6, 0.4, 0.0], [0.1, 0.0, 0.9], [0.5, 0.1, 0.4]])
    frame = coherence_frame(beta, coherence_corpus, sizes, m=2)
    assert list(frame.columns) == ["topic", "size", "coherence"]
    assert frame["topic"].tolist() == [1, 2, 3]


def test_distance_matrix():
    beta = np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]])
    np.testing.assert_allclose(topic_distance_matrix(beta), [[0, 2, 1], [2, 0, 1], [1, 1, 0]])


def test_alignment_recovers_permutation(rng):
    reference = rng.dirichlet(np.ones(6), size=4)
    permutation = np.array([2, 0, 3, 1])
    candidate = np.empty_like(reference)
    candidate[permutation] = reference
    for method in ("greedy", "exhaustive"):
        found = align_topics(reference, candidate, method)
        np.testing.assert_array_equal(candidate[found], reference)


def test_alignment_identity_fallback():
    # greedy takes the closest pair (0, 1) first: 0.1 + 1.2 against 0.2 + 0.9
    reference = np.array([[0.0], [1.0]])
    candidate = np.array([[-0.2], [0.1]])
    np.testing.assert_array_equal(align_topics(reference, candidate), [0, 1])
    np.testing.assert_array_equal(align_topics(reference, candidate, "exhaustive"), [0, 1])


def test_alignment_errors():
    with pytest.raises(UsageError):
        align_topics(np.eye(2), np.eye(3))
    with pytest.raises(UsageError):
        align_topics(np.eye(2), np.eye(2), "hungarian-ish")


def test_mixture_alignment_and_distance():
    truth = np.array([[0.7, 0.2, 0.1], [0.1, 0.3, 0.6]])
    estimate = truth[:, [2, 0, 1]]
    aligned, _ = align_mixtures(truth, estimate)
    np.testing.assert_allclose(aligned, truth)
    np.testing.assert_allclose(aligned_l1(truth, estimate), [0.0, 0.0])


def test_iterations_to_region():
    truth = np.array([[0.7, 0.3]])
    trace = [np.array([[0.3, 0.7]]), np.array([[0.5, 0.5]]), np.array([[0.32, 0.68]])]
    assert iterations_to_region([1, 2, 3], trace, truth, threshold=0.07) == 1
    assert iterations_to_region([1, 2, 3], trace[1:2], truth, threshold=0.07) is None


def test_autocorrelation_of_alternating_series():
    rho = autocorrelation([1.0, -1.0] * 50, max_lag=2)
    assert rho[0] == pytest.approx(1.0)
    assert rho[1] == pytest.approx(-0.99)
    assert rho[2] == pytest.approx(0.98)


def test_constant_series_autocorrelation():
    np.testing.assert_array_equal(autocorrelation(np.ones(5)), [1, 0, 0, 0, 0])
    with pytest.raises(UsageError):
        autocorrelation([1.0])


def test_effective_sample_size(rng):
    independent = rng.standard_normal(4000)
    assert effective_sample_size(independent) == pytest.approx(4000, rel=0.2)
    correlated = np.empty(4000)
    correlated[0] = 0.0
    for t in range(1, 4000):
        correlated[t] = 0.9 * correlated[t - 1] + rng.standard_normal()
    # AR(1) with phi = 0.9 has integrated time (1 + 0.9) / (1 - 0.9) = 19
    assert effective_sample_size(correlated) == pytest.approx(4000 / 19, rel=0.35)


def test_mixing_diagnostics_per_component(rng):
    steps = 400
    wobble = 0.1 * rng.standard_normal(steps)
    path = [np.array([[0.5 + 0.1 * w, 0.5 - 0.1 * w], [0.2, 0.8]]) for w in wobble]
    ess, acf = mixing_diagnostics(path, max_lag=5)
    assert list(ess.columns) == ["collection", "topic", "ess"]
    assert ess[["collection", "topic"]].values.tolist() == [[1, 1], [1, 2], [2, 1], [2, 2]]
    assert ess["ess"].iloc[0] == pytest.approx(steps, rel=0.3)
    # constant components count every draw
    assert ess["ess"].iloc[2:].tolist() == [steps, steps]
    assert list(acf.columns) == ["collection", "topic", "lag", "acf"]
    assert len(acf) == 4 * 6
    np.testing.assert_allclose(acf.loc[acf["topic"] == 1, "acf"].iloc[:6], autocorrelation([pi[0, 0] for pi in path], 5))
    with pytest.raises(UsageError):
        mixing_diagnostics(path[:1])