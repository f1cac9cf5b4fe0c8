import time
import logging
import numpy as np
from Chain import ChainTrace
from Config.Run import LdaConfig, build
from Corpus import Corpus
from Errors import DataError, UsageError
from Model import Checkpoint, log_collapsed_lda, recompute_counts
from Numerics import make_rng, restore_rng, rng_state
from inference.ags import is_save_point, sweep_tokens

logger = logging.getLogger(__name__)


def lda_conditional_weights(v, n_dk, m_kv, m_k, alpha, eta):
    """Unnormalized CGS weights of one token, counts excluding the token."""
    V = m_kv.shape[1]
    return (alpha + np.asarray(n_dk)) * (eta + m_kv[:, v]) / (V * eta + m_k)


def estimate_collection_mixture_from_z(z, collection_of_token, K, J=None):
    """Per-collection normalized topic histogram of the token labels.

    ``collection_of_token`` gives the collection of every token.
    """
    z = np.asarray(z, dtype=np.int64)
    collection_of_token = np.asarray(collection_of_token, dtype=np.int64)
    if z.shape != collection_of_token.shape:
        raise DataError("z and collection labels differ in length")
    J = int(collection_of_token.max()) + 1 if J is None else J
    histogram = np.zeros((J, K), dtype=np.float64)
    np.add.at(histogram, (collection_of_token, z), 1.0)
    totals = histogram.sum(axis=1, keepdims=True)
    if np.any(totals == 0):
        empty = [int(j) for j in np.flatnonzero(totals[:, 0] == 0)]
        raise DataError(f"Collections {empty} have no tokens")
    return histogram / totals


def collection_mixture(corpus: Corpus, z, K):
    return estimate_collection_mixture_from_z(
        z, corpus.collection_of[corpus.docs], K, corpus.J
    )


def cgs_run(corpus: Corpus, K, alpha, eta, config: LdaConfig, init=None, rng=None) -> ChainTrace:
    """Collapsed Gibbs sampling for LDA; collections are ignored."""
    if K < 1:
        raise UsageError("K must be at least 1")
    if alpha <= 0 or eta <= 0:
        raise UsageError("alpha and eta must be positive")
    start = 0
    if isinstance(init, Checkpoint):
        if init.K != K:
            raise DataError(f"Checkpoint has K={init.K}, expected {K}")
        z = init.z.copy()
        start = init.iteration
        rng = restore_rng(init.rng_state)
    else:
        rng = make_rng(config.seed) if rng is None else rng
        z = rng.integers(0, K, size=corpus.num_tokens).astype(np.int64)
        if init is not None:
            z = np.asarray(init.z, dtype=np.int64).copy()
    counts = recompute_counts(corpus, z, K)
    doc_prior = np.full((corpus.num_documents, K), float(alpha))
    hyperparameters = {"alpha": float(alpha), "eta": float(eta)}
    trace = ChainTrace("lda-cgs", K, hyperparameters)
    started = time.perf_counter()
    for iteration in range(start + 1, config.iterations + 1):
        sweep_tokens(rng, corpus, z, counts, doc_prior, eta)
        log_joint = log_collapsed_lda(counts, alpha, eta)
        elapsed = time.perf_counter() - started
        trace.record(iteration, log_joint, elapsed)
        if is_save_point(iteration, config):
            trace.add_sample(iteration, z)
            logger.info(
                f"lda-cgs iteration {iteration}/{config.iterations} "
                f"log_joint={log_joint:.4f} seconds={elapsed:.2f}"
            )
    trace.final = Checkpoint(
        "lda-cgs", K, hyperparameters, config.iterations, z.copy(), None, rng_state(rng)
    )
    return trace


class LdaCgsInference:
    def __init__(
        self,
        k: int = 10,
        alpha: float = 0.1,
        eta: float = 0.25,
        iterations: int = 2000,
        burn_in: int = 1000,
        save_every: int = 10,
        seed: int = None,
        **kwargs,
    ):
        if alpha is None or alpha <= 0 or eta is None or eta <= 0:
            raise UsageError("alpha and eta must be positive")
        self.K = k
        self.alpha = alpha
        self.eta = eta
        self.config = build(
            LdaConfig, iterations=iterations, burn_in=burn_in, save_every=save_every, seed=seed
        )

    def run(self, corpus, init=None, rng=None):
        return cgs_run(corpus, self.K, self.alpha, self.eta, self.config, init=init, rng=rng)
