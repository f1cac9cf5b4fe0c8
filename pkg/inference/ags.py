import time
import logging
import numpy as np
from Chain import ChainTrace
from Config.Run import AgsConfig, Hyperparameters, build
from Corpus import Corpus
from Errors import DataError, UsageError
from Kernels import antoniak_tables, gibbs_sweep
from Model import (
    AuxiliaryTables,
    Checkpoint,
    ModelState,
    initial_state,
    log_collapsed_joint,
    recompute_counts,
)
from Numerics import make_rng, restore_rng, rng_state, sample_dirichlet

logger = logging.getLogger(__name__)


def z_conditional_weights(v, n_dk, n_d, m_kv, m_k, pi_j, h: Hyperparameters):
    """Unnormalized conditional weights of one token's topic.

    ``n_dk``/``n_d`` are the token's document counts and ``m_kv``/``m_k`` the
    topic counts, all with the token itself removed.
    """
    V = m_kv.shape[1]
    document_factor = (h.gamma * np.asarray(pi_j) + n_dk) / (h.gamma + n_d)
    topic_factor = (h.eta + m_kv[:, v]) / (V * h.eta + m_k)
    return document_factor * topic_factor


def antoniak_sample(rng, n, concentration):
    """Number of occupied tables after seating ``n`` customers in a CRP(c)."""
    if n < 0 or concentration <= 0:
        raise UsageError("antoniak_sample needs n >= 0 and concentration > 0")
    if n == 0:
        return 0
    l = np.arange(n)
    return int(np.sum(rng.random(n) * (concentration + l) < concentration))


def sample_tables(rng, n_dk, concentration) -> AuxiliaryTables:
    """Antoniak draws for every (document, topic) cell at once."""
    n_dk = np.ascontiguousarray(n_dk, dtype=np.int64)
    uniforms = rng.random(int(n_dk.sum()))
    return AuxiliaryTables(antoniak_tables(n_dk, np.ascontiguousarray(concentration), uniforms))


def sample_pi(rng, s_totals, alpha):
    """pi_j ~ Dir(sum_d s_jd1 + alpha, ..., sum_d s_jdK + alpha)."""
    return sample_dirichlet(rng, np.asarray(s_totals, dtype=np.float64) + alpha)


def is_save_point(iteration, config):
    return iteration > config.burn_in and (iteration - config.burn_in) % config.save_every == 0


def sweep_tokens(rng, corpus: Corpus, z, counts, doc_prior, eta):
    gibbs_sweep(
        corpus.words,
        corpus.docs,
        z,
        counts.n_dk,
        counts.m_kv,
        counts.m_k,
        np.ascontiguousarray(doc_prior, dtype=np.float64),
        float(eta),
        rng.random(corpus.num_tokens),
    )


def starting_point(corpus: Corpus, K, alpha, init, rng, seed):
    """Resolve (state, first iteration, rng) from an optional init.

    ``init`` may be a Checkpoint, which also restores the random stream, or a
    ModelState carrying z and optionally pi.
    """
    if isinstance(init, Checkpoint):
        if init.K != K:
            raise DataError(f"Checkpoint has K={init.K}, expected {K}")
        if init.pi is None:
            raise DataError(f"A {init.algorithm} checkpoint carries no collection mixtures to resume from")
        state = ModelState(K=K, z=init.z.copy(), pi=init.pi.copy())
        state.check(corpus)
        return state, init.iteration, restore_rng(init.rng_state)
    rng = make_rng(seed) if rng is None else rng
    fresh = initial_state(rng, corpus, K, alpha)
    if init is None:
        return fresh, 0, rng
    state = ModelState(
        K=K,
        z=np.asarray(init.z, dtype=np.int64).copy() if init.z is not None else fresh.z,
        pi=np.asarray(init.pi, dtype=np.float64).copy() if init.pi is not None else fresh.pi,
    )
    state.check(corpus)
    return state, 0, rng


def update_pi_auxiliary(rng, corpus: Corpus, counts, pi, h: Hyperparameters):
    """Draw table counts for every (d, k), then a fresh pi_j per collection."""
    tables = sample_tables(rng, counts.n_dk, h.gamma * pi[corpus.collection_of])
    totals = tables.totals(corpus.collection_of, corpus.J)
    return np.vstack([sample_pi(rng, totals[j], h.alpha) for j in range(corpus.J)])


def ags_run(corpus: Corpus, K, h: Hyperparameters, config: AgsConfig, init=None, rng=None) -> ChainTrace:
    if K < 1:
        raise UsageError("K must be at least 1")
    state, start, rng = starting_point(corpus, K, h.alpha, init, rng, config.seed)
    counts = recompute_counts(corpus, state.z, K)
    trace = ChainTrace("ags", K, h.model_dump())
    started = time.perf_counter()
    for iteration in range(start + 1, config.iterations + 1):
        sweep_tokens(rng, corpus, state.z, counts, h.gamma * state.pi[corpus.collection_of], h.eta)
        state.pi = update_pi_auxiliary(rng, corpus, counts, state.pi, h)
        log_joint = log_collapsed_joint(counts, state.pi, corpus.collection_of, h)
        elapsed = time.perf_counter() - started
        trace.record(iteration, log_joint, elapsed, pi=state.pi)
        if is_save_point(iteration, config):
            trace.add_sample(iteration, state.z, state.pi)
            logger.info(
                f"ags iteration {iteration}/{config.iterations} "
                f"log_joint={log_joint:.4f} seconds={elapsed:.2f}"
            )
    trace.final = Checkpoint(
        "ags", K, h.model_dump(), config.iterations, state.z.copy(), state.pi.copy(), rng_state(rng)
    )
    return trace


class AgsInference:
    def __init__(
        self,
        k: int = 10,
        alpha: float = 0.1,
        gamma: float = 1.0,
        eta: float = 0.25,
        iterations: int = 2000,
        burn_in: int = 1000,
        save_every: int = 10,
        seed: int = None,
        **kwargs,
    ):
        self.K = k
        self.h = build(Hyperparameters, alpha=alpha, gamma=gamma, eta=eta)
        self.config = build(
            AgsConfig, iterations=iterations, burn_in=burn_in, save_every=save_every, seed=seed
        )

    def run(self, corpus, init=None, rng=None):
        return ags_run(corpus, self.K, self.h, self.config, init=init, rng=rng)
