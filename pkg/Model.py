import json
import logging
from dataclasses import dataclass, field
from typing import Optional
import numpy as np
import jsonschema
from scipy.special import gammaln
from Config.Run import Hyperparameters
from Corpus import Corpus
from Errors import DataError, NumericError
from Numerics import sample_dirichlet

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1

CHECKPOINT_SCHEMA = {
    "type": "object",
    "required": ["format_version", "algorithm", "K", "hyperparameters", "iteration", "z", "rng_state"],
    "properties": {
        "format_version": {"const": CHECKPOINT_VERSION},
        "algorithm": {"type": "string"},
        "K": {"type": "integer", "minimum": 1},
        "hyperparameters": {
            "type": "object",
            "required": ["alpha", "eta"],
        },
        "iteration": {"type": "integer", "minimum": 0},
        "z": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "pi": {"type": ["array", "null"]},
        "rng_state": {"type": "object"},
        "extra": {"type": "object"},
    },
}


@dataclass
class CountStatistics:
    """Sufficient statistics of a topic assignment.

    Documents are indexed globally, so ``n_dk[d]`` is n_jdk for the document's
    collection j. The per-document, per-term counts are never stored.
    """

    n_dk: np.ndarray
    n_d: np.ndarray
    m_kv: np.ndarray
    m_k: np.ndarray

    @property
    def K(self):
        return self.m_k.shape[0]

    @property
    def V(self):
        return self.m_kv.shape[1]

    def copy(self):
        return CountStatistics(
            self.n_dk.copy(), self.n_d.copy(), self.m_kv.copy(), self.m_k.copy()
        )

    def check(self, lengths=None):
        """Raise NumericError when the count identities do not hold."""
        if np.any(self.n_dk < 0) or np.any(self.m_kv < 0):
            raise NumericError("Negative topic count")
        if not np.array_equal(self.n_dk.sum(axis=1), self.n_d):
            raise NumericError("Document-topic counts do not sum to document lengths")
        if not np.array_equal(self.m_kv.sum(axis=1), self.m_k):
            raise NumericError("Topic-term counts do not sum to topic sizes")
        if self.m_k.sum() != self.n_d.sum():
            raise NumericError("Topic sizes do not sum to the number of tokens")
        if lengths is not None and not np.array_equal(self.n_d, lengths):
            raise NumericError("Document totals differ from document lengths")

    def __eq__(self, other):
        return (
            isinstance(other, CountStatistics)
            and np.array_equal(self.n_dk, other.n_dk)
            and np.array_equal(self.n_d, other.n_d)
            and np.array_equal(self.m_kv, other.m_kv)
            and np.array_equal(self.m_k, other.m_k)
        )


@dataclass
class AuxiliaryTables:
    """Table counts s_dk with 0 <= s_dk <= n_dk and s_dk = 0 iff n_dk = 0."""

    s_dk: np.ndarray

    def totals(self, collection_of, J):
        """Sum of s over the documents of each collection, shape (J, K)."""
        totals = np.zeros((J, self.s_dk.shape[1]), dtype=np.int64)
        np.add.at(totals, collection_of, self.s_dk)
        return totals


@dataclass
class ModelState:
    K: int
    z: np.ndarray
    pi: Optional[np.ndarray] = None
    theta: Optional[np.ndarray] = None
    beta: Optional[np.ndarray] = None

    def check(self, corpus: Corpus):
        if self.z.shape[0] != corpus.num_tokens:
            raise DataError(f"{self.z.shape[0]} topic labels for {corpus.num_tokens} tokens")
        if self.z.size and (self.z.min() < 0 or self.z.max() >= self.K):
            raise DataError(f"Topic label outside [0, {self.K})")
        if self.pi is not None and self.pi.shape != (corpus.J, self.K):
            raise DataError(f"pi has shape {self.pi.shape}, expected {(corpus.J, self.K)}")
        if self.beta is not None and self.beta.shape != (self.K, corpus.V):
            raise DataError(f"beta has shape {self.beta.shape}, expected {(self.K, corpus.V)}")
        if self.theta is not None and self.theta.shape != (corpus.num_documents, self.K):
            raise DataError(
                f"theta has shape {self.theta.shape}, expected {(corpus.num_documents, self.K)}"
            )


def recompute_counts(corpus: Corpus, z, K) -> CountStatistics:
    z = np.asarray(z, dtype=np.int64)
    if z.shape[0] != corpus.num_tokens:
        raise DataError(f"{z.shape[0]} topic labels for {corpus.num_tokens} tokens")
    n_dk = np.zeros((corpus.num_documents, K), dtype=np.int64)
    np.add.at(n_dk, (corpus.docs, z), 1)
    m_kv = np.zeros((K, corpus.V), dtype=np.int64)
    np.add.at(m_kv, (z, corpus.words), 1)
    return CountStatistics(n_dk, n_dk.sum(axis=1), m_kv, m_kv.sum(axis=1))


def _finite(value, what):
    if not np.isfinite(value):
        raise NumericError(f"{what} is not finite")
    return float(value)


def _xlogy(coefficient, values):
    # 0 * log 0 contributes nothing; a negative exponent on a zero entry is -inf.
    values = np.asarray(values, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = coefficient * np.log(values)
    return np.where(coefficient == 0, 0.0, terms)


def log_joint(corpus: Corpus, state: ModelState, h: Hyperparameters, counts=None):
    """Unnormalized log posterior of (beta, pi, theta, z).

    Sum of three terms: the document term
    sum_jd [sum_k (n_jdk + gamma pi_jk - 1) log theta_jdk - log Gamma(gamma pi_jk)],
    the collection prior (alpha - 1) sum_jk log pi_jk, and the topic term
    sum_kv (m_kv + eta - 1) log beta_kv.
    """
    state.check(corpus)
    if counts is None:
        counts = recompute_counts(corpus, state.z, state.K)
    doc_prior = h.gamma * state.pi[corpus.collection_of]
    document_term = np.sum(_xlogy(counts.n_dk + doc_prior - 1.0, state.theta)) - np.sum(
        gammaln(doc_prior)
    )
    collection_term = np.sum(_xlogy(h.alpha - 1.0, state.pi))
    topic_term = np.sum(_xlogy(counts.m_kv + h.eta - 1.0, state.beta))
    return _finite(document_term + collection_term + topic_term, "log_joint")


def log_collapsed_joint(counts: CountStatistics, pi, collection_of, h: Hyperparameters):
    """log p(pi, z | w) up to a constant, with theta and beta integrated out."""
    V = counts.V
    doc_prior = h.gamma * pi[collection_of]
    document_term = np.sum(
        gammaln(h.gamma) - gammaln(h.gamma + counts.n_d)
    ) + np.sum(gammaln(doc_prior + counts.n_dk) - gammaln(doc_prior))
    collection_term = np.sum(_xlogy(h.alpha - 1.0, pi))
    topic_term = np.sum(gammaln(V * h.eta) - gammaln(V * h.eta + counts.m_k)) + np.sum(
        gammaln(h.eta + counts.m_kv) - gammaln(h.eta)
    )
    return _finite(document_term + collection_term + topic_term, "collapsed log joint")


def log_collapsed_lda(counts: CountStatistics, alpha, eta):
    """log p(z | w) up to a constant for LDA with symmetric priors."""
    K, V = counts.K, counts.V
    document_term = np.sum(gammaln(K * alpha) - gammaln(K * alpha + counts.n_d)) + np.sum(
        gammaln(alpha + counts.n_dk) - gammaln(alpha)
    )
    topic_term = np.sum(gammaln(V * eta) - gammaln(V * eta + counts.m_k)) + np.sum(
        gammaln(eta + counts.m_kv) - gammaln(eta)
    )
    return _finite(document_term + topic_term, "LDA log joint")


def sample_theta_beta(rng, counts: CountStatistics, pi, collection_of, h: Hyperparameters):
    """One exact draw of theta and beta given (pi, z)."""
    theta = sample_dirichlet(rng, counts.n_dk + h.gamma * pi[collection_of])
    beta = sample_dirichlet(rng, counts.m_kv + h.eta)
    return theta, beta


def initial_state(rng, corpus: Corpus, K, alpha):
    """Uniform random topic labels and pi drawn from its Dir(alpha) prior."""
    z = rng.integers(0, K, size=corpus.num_tokens).astype(np.int64)
    pi = sample_dirichlet(rng, np.full((corpus.J, K), alpha))
    return ModelState(K=K, z=z, pi=pi)


@dataclass
class Checkpoint:
    algorithm: str
    K: int
    hyperparameters: dict
    iteration: int
    z: np.ndarray
    pi: Optional[np.ndarray]
    rng_state: dict
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "format_version": CHECKPOINT_VERSION,
            "algorithm": self.algorithm,
            "K": self.K,
            "hyperparameters": self.hyperparameters,
            "iteration": self.iteration,
            "z": [int(k) for k in self.z],
            "pi": None if self.pi is None else np.asarray(self.pi).tolist(),
            "rng_state": self.rng_state,
            "extra": self.extra,
        }


def save_checkpoint(checkpoint: Checkpoint, path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(checkpoint.to_dict(), f)
        f.write("\n")
    logger.info(f"Checkpoint at iteration {checkpoint.iteration} written to {path}")


def load_checkpoint(path) -> Checkpoint:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
        jsonschema.validate(data, CHECKPOINT_SCHEMA)
    except (OSError, json.JSONDecodeError, jsonschema.ValidationError) as e:
        raise DataError(f"Invalid checkpoint {path}: {e}") from e
    return Checkpoint(
        algorithm=data["algorithm"],
        K=data["K"],
        hyperparameters=data["hyperparameters"],
        iteration=data["iteration"],
        z=np.asarray(data["z"], dtype=np.int64),
        pi=None if data.get("pi") is None else np.asarray(data["pi"], dtype=np.float64),
        rng_state=data["rng_state"],
        extra=data.get("extra", {}),
    )
