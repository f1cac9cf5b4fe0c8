import itertools
import logging
from dataclasses import dataclass
from typing import List, Optional
import numpy as np
import pandas as pd
from scipy import sparse
from scipy.spatial.distance import cdist
from Config.Run import Hyperparameters
from Corpus import Corpus
from Errors import DataError, UsageError
from Model import CountStatistics, recompute_counts

logger = logging.getLogger(__name__)


@dataclass
class RaoBlackwellEstimates:
    """Conditional means of theta (D x K) and beta (K x V) given one sample."""

    theta: np.ndarray
    beta: np.ndarray

    def word_probabilities(self, docs, words):
        return np.einsum("ik,ki->i", self.theta[docs], self.beta[:, words])


def rao_blackwell_clda(counts: CountStatistics, pi, collection_of, h: Hyperparameters):
    doc_prior = h.gamma * np.asarray(pi)[collection_of]
    theta = (counts.n_dk + doc_prior) / (counts.n_d + h.gamma)[:, None]
    beta = (counts.m_kv + h.eta) / (counts.m_k + counts.V * h.eta)[:, None]
    return RaoBlackwellEstimates(theta, beta)


def rao_blackwell_lda(counts: CountStatistics, alpha, eta):
    theta = (counts.n_dk + alpha) / (counts.n_d + counts.K * alpha)[:, None]
    beta = (counts.m_kv + eta) / (counts.m_k + counts.V * eta)[:, None]
    return RaoBlackwellEstimates(theta, beta)


def perplexity_from_estimates(test_docs, test_words, estimates: List[RaoBlackwellEstimates]):
    """exp(-mean log p) with p averaged over the estimates for every test word."""
    test_docs = np.asarray(test_docs, dtype=np.int64)
    test_words = np.asarray(test_words, dtype=np.int64)
    if test_words.size == 0:
        raise DataError("Held-out test set is empty")
    if not estimates:
        raise DataError("No samples to evaluate")
    probabilities = np.mean(
        [estimate.word_probabilities(test_docs, test_words) for estimate in estimates], axis=0
    )
    return float(np.exp(-np.mean(np.log(probabilities))))


def perplexity_clda(train: Corpus, test_docs, test_words, samples, h: Hyperparameters, K):
    """Held-out perplexity of a cLDA chain.

    ``samples`` are (z, pi) pairs saved from a chain run on ``train``.
    """
    estimates = [
        rao_blackwell_clda(recompute_counts(train, z, K), pi, train.collection_of, h)
        for z, pi in samples
    ]
    return perplexity_from_estimates(test_docs, test_words, estimates)


def perplexity_lda(train: Corpus, test_docs, test_words, samples, alpha, eta, K):
    """Held-out perplexity of an LDA chain; ``samples`` are z vectors."""
    estimates = [rao_blackwell_lda(recompute_counts(train, z, K), alpha, eta) for z in samples]
    return perplexity_from_estimates(test_docs, test_words, estimates)


def perplexity_vem(test_docs, test_words, params):
    """Plug-in perplexity from E_q[theta] and E_q[beta]."""
    estimate = RaoBlackwellEstimates(params.theta_estimate(), params.beta_estimate())
    return perplexity_from_estimates(test_docs, test_words, [estimate])


def perplexity_trajectory(test_docs, test_words, iterations, estimates):
    """Per-sample perplexity, one row per saved iteration."""
    return pd.DataFrame(
        {
            "iteration": list(iterations),
            "perplexity": [
                perplexity_from_estimates(test_docs, test_words, [estimate]) for estimate in estimates
            ],
        }
    )


def topic_size(z, K):
    return np.bincount(np.asarray(z, dtype=np.int64), minlength=K)


def top_words(beta, m):
    """Indices of the m largest entries of every row, ties to the smaller id."""
    beta = np.asarray(beta, dtype=np.float64)
    if m < 1 or m > beta.shape[1]:
        raise UsageError(f"top-m must lie in [1, {beta.shape[1]}]")
    ids = np.arange(beta.shape[1])
    return np.vstack([np.lexsort((ids, -row))[:m] for row in beta])


def presence_matrix(corpus: Corpus):
    """Binary D x V document-term incidence matrix."""
    presence = sparse.csr_matrix(
        (np.ones(corpus.num_tokens), (corpus.docs, corpus.words)),
        shape=(corpus.num_documents, corpus.V),
    )
    presence.data[:] = 1.0
    return presence


def topic_coherence(beta, corpus: Corpus, m=20):
    """Co-document coherence of every topic's top-m words.

    sum_{i=2..m} sum_{j<i} log((codf(v_i, v_j) + 1) / df(v_j)), words ranked
    by beta; document frequencies come from ``corpus``.
    """
    presence = presence_matrix(corpus).tocsc()
    scores = []
    for words in top_words(beta, m):
        columns = presence[:, words]
        df = np.asarray(columns.sum(axis=0)).ravel()
        if np.any(df == 0):
            missing = [int(v) for v in words[df == 0]]
            raise DataError(f"Top words {missing} occur in no document")
        codf = (columns.T @ columns).toarray()
        rows, cols = np.tril_indices(len(words), k=-1)
        scores.append(float(np.sum(np.log((codf[rows, cols] + 1.0) / df[cols]))))
    return np.asarray(scores)


def topic_distance_matrix(beta):
    """Pairwise L1 (manhattan) distances between topic rows."""
    return cdist(beta, beta, metric="cityblock")


def _alignment_cost(distances, permutation):
    return float(distances[np.arange(len(permutation)), permutation].sum())


def align_topics(reference, candidate, method="greedy"):
    """Permutation p with candidate[p[i]] matched to reference[i] under L1.

    Greedy matching repeatedly takes the closest unmatched pair and falls back
    to the identity when that is cheaper; ``exhaustive`` searches every
    permutation.
    """
    reference = np.atleast_2d(np.asarray(reference, dtype=np.float64))
    candidate = np.atleast_2d(np.asarray(candidate, dtype=np.float64))
    if reference.shape != candidate.shape:
        raise UsageError(f"Cannot align topics of shape {candidate.shape} to {reference.shape}")
    K = reference.shape[0]
    distances = cdist(reference, candidate, metric="cityblock")
    identity = np.arange(K)
    if method == "exhaustive":
        best = min(itertools.permutations(range(K)), key=lambda p: _alignment_cost(distances, p))
        return np.asarray(best, dtype=np.int64)
    if method != "greedy":
        raise UsageError(f"Unknown alignment method '{method}'")
    permutation = np.full(K, -1, dtype=np.int64)
    remaining = distances.copy()
    for _ in range(K):
        i, j = np.unravel_index(np.argmin(remaining), remaining.shape)
        permutation[i] = j
        remaining[i, :] = np.inf
        remaining[:, j] = np.inf
    if _alignment_cost(distances, identity) < _alignment_cost(distances, permutation):
        return identity
    return permutation


def align_mixtures(reference_pi, candidate_pi, method="greedy"):
    """Align topic columns of two J x K mixture matrices; returns the aligned candidate."""
    permutation = align_topics(np.asarray(reference_pi).T, np.asarray(candidate_pi).T, method)
    return np.asarray(candidate_pi)[:, permutation], permutation


def aligned_l1(reference_pi, candidate_pi, method="greedy"):
    """Per-collection L1 distance after topic alignment."""
    aligned, _ = align_mixtures(reference_pi, candidate_pi, method)
    return np.abs(np.asarray(reference_pi) - aligned).sum(axis=1)


def autocorrelation(series, max_lag=None):
    """Sample autocorrelation of a scalar trace for lags 0..max_lag."""
    x = np.asarray(series, dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        raise UsageError("autocorrelation needs at least two values")
    max_lag = n - 1 if max_lag is None else min(max_lag, n - 1)
    centered = x - x.mean()
    spectrum = np.fft.rfft(centered, 2 * n)
    acov = np.fft.irfft(spectrum * np.conj(spectrum))[:n]
    if acov[0] == 0:
        # A constant trace carries no information beyond lag 0.
        return np.concatenate([[1.0], np.zeros(max_lag)])
    return acov[: max_lag + 1] / acov[0]


def effective_sample_size(series):
    """N / (1 + 2 sum_t rho_t), summing lag pairs while their sum stays positive."""
    x = np.asarray(series, dtype=np.float64)
    n = x.shape[0]
    rho = autocorrelation(x)
    tau = -1.0
    for m in range(0, n // 2):
        pair = rho[2 * m] + (rho[2 * m + 1] if 2 * m + 1 < n else 0.0)
        if pair < 0:
            break
        tau += 2.0 * pair
    return float(n / max(tau, 1.0 / n))


def iterations_to_region(iterations, pi_trace, pi_true, threshold=0.07, method="greedy") -> Optional[int]:
    """First iteration whose aligned per-collection L1 distance is within ``threshold``."""
    for iteration, pi in zip(iterations, pi_trace):
        if np.all(aligned_l1(pi_true, pi, method) <= threshold):
            return int(iteration)
    return None


def coherence_frame(beta, corpus: Corpus, sizes, m=20):
    return pd.DataFrame(
        {
            "topic": np.arange(1, len(sizes) + 1),
            "size": np.asarray(sizes, dtype=np.int64),
            "coherence": topic_coherence(beta, corpus, m),
        }
    )


def mixing_diagnostics(pi_path, max_lag=50):
    """Effective sample size and autocorrelation of every pi_jk trace.

    Returns (ess frame with collection, topic, ess; long acf frame with
    collection, topic, lag, acf).
    """
    path = np.asarray(pi_path, dtype=np.float64)
    if path.ndim != 3 or path.shape[0] < 2:
        raise UsageError("Mixing diagnostics need at least two (J, K) mixtures")
    ess_rows, acf_frames = [], []
    for j in range(path.shape[1]):
        for k in range(path.shape[2]):
            series = path[:, j, k]
            ess_rows.append({"collection": j + 1, "topic": k + 1, "ess": effective_sample_size(series)})
            acf = autocorrelation(series, max_lag)
            acf_frames.append(
                pd.DataFrame({"collection": j + 1, "topic": k + 1, "lag": np.arange(acf.shape[0]), "acf": acf})
            )
    return pd.DataFrame(ess_rows), pd.concat(acf_frames, ignore_index=True)
