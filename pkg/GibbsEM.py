"""Hyperparameter estimation by Gibbs-EM.

The E-step keeps a handful of thinned posterior samples from a warm-started
sampler; the M-step applies fixed-point maps that maximize a lower bound of
the expected log evidence built from those samples.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional
import numpy as np
import pandas as pd
from scipy.special import digamma
from Config.Run import AgsConfig, GibbsEmConfig, Hyperparameters, LdaConfig
from Corpus import Corpus
from Errors import DegenerateInputError, UsageError
from Model import CountStatistics, ModelState, recompute_counts
from Numerics import make_rng, spawn_rngs
from inference.ags import ags_run
from inference.lda_cgs import cgs_run

logger = logging.getLogger(__name__)

TRAJECTORY_FILE = "trajectory.csv"


@dataclass
class GibbsEmSample:
    counts: CountStatistics
    pi: Optional[np.ndarray] = None


@dataclass
class GibbsEmTrajectory:
    model: str
    rows: List[dict] = field(default_factory=list)
    converged: bool = False
    unsettled_m_steps: int = 0

    def add(self, outer_iteration, **values):
        row = {"outer_iter": outer_iteration}
        row.update({name: float(value) for name, value in values.items()})
        self.rows.append(row)

    @property
    def final(self):
        return self.rows[-1]

    def tail_average(self, window=5):
        """Mean of each estimate over the last ``window`` outer iterations.

        With a few samples per E-step the estimates keep fluctuating around the
        fixed point, so this is steadier than the last row.
        """
        tail = self.to_frame().drop(columns="outer_iter").iloc[1:].tail(window)
        return {name: float(value) for name, value in tail.mean().items()}

    def to_frame(self, replicate=None):
        frame = pd.DataFrame(self.rows)
        if replicate is not None:
            frame.insert(0, "replicate", replicate)
        return frame


def _ratio(numerator, denominator, what):
    if denominator == 0:
        raise DegenerateInputError(f"{what} fixed point is 0/0: all counts are zero")
    return numerator / denominator


def _require(samples):
    if not samples:
        raise DegenerateInputError("Gibbs-EM M-step needs at least one sample")


def fixed_point_eta(samples: List[GibbsEmSample], eta):
    """eta' = (eta / V) sum[Psi(m_kv + eta) - Psi(eta)] / sum[Psi(m_k + V eta) - Psi(V eta)]."""
    _require(samples)
    V = samples[0].counts.V
    numerator = sum(np.sum(digamma(s.counts.m_kv + eta) - digamma(eta)) for s in samples)
    denominator = sum(np.sum(digamma(s.counts.m_k + V * eta) - digamma(V * eta)) for s in samples)
    return eta / V * _ratio(numerator, denominator, "eta")


def fixed_point_gamma(samples: List[GibbsEmSample], gamma, collection_of):
    """gamma' = gamma sum pi[Psi(n_dk + gamma pi) - Psi(gamma pi)] / sum[Psi(n_d + gamma) - Psi(gamma)]."""
    _require(samples)
    numerator = 0.0
    denominator = 0.0
    for sample in samples:
        pi = sample.pi[collection_of]
        numerator += np.sum(pi * (digamma(sample.counts.n_dk + gamma * pi) - digamma(gamma * pi)))
        denominator += np.sum(digamma(sample.counts.n_d + gamma) - digamma(gamma))
    return gamma * _ratio(numerator, denominator, "gamma")


def fixed_point_alpha_lda(samples: List[GibbsEmSample], alpha):
    """Symmetric Dirichlet fixed point for the LDA document prior."""
    _require(samples)
    K = samples[0].counts.K
    numerator = sum(np.sum(digamma(s.counts.n_dk + alpha) - digamma(alpha)) for s in samples)
    denominator = sum(np.sum(digamma(s.counts.n_d + K * alpha) - digamma(K * alpha)) for s in samples)
    return alpha * _ratio(numerator, K * denominator, "alpha")


def eta_surrogate(eta, samples: List[GibbsEmSample], eta_t):
    """Lower bound (up to a constant) on the topic evidence, tight at eta_t.

    fixed_point_eta is its exact maximizer.
    """
    V = samples[0].counts.V
    log_weight = sum(eta_t * np.sum(digamma(s.counts.m_kv + eta_t) - digamma(eta_t)) for s in samples)
    linear = sum(np.sum(digamma(s.counts.m_k + V * eta_t) - digamma(V * eta_t)) for s in samples)
    return float(log_weight * np.log(eta) - linear * V * eta)


def gamma_surrogate(gamma, samples: List[GibbsEmSample], gamma_t, collection_of):
    log_weight = 0.0
    linear = 0.0
    for sample in samples:
        pi = sample.pi[collection_of]
        log_weight += gamma_t * np.sum(
            pi * (digamma(sample.counts.n_dk + gamma_t * pi) - digamma(gamma_t * pi))
        )
        linear += np.sum(digamma(sample.counts.n_d + gamma_t) - digamma(gamma_t))
    return float(log_weight * np.log(gamma) - linear * gamma)


def _relative_change(new, old):
    return max(abs(n - o) / o for n, o in zip(new, old))


def _window_change(trajectory: GibbsEmTrajectory, window):
    """Relative change between the means of the last two windows of rows."""
    if len(trajectory.rows) < 2 * window:
        return np.inf
    frame = trajectory.to_frame().drop(columns="outer_iter")
    recent = frame.iloc[-window:].mean()
    earlier = frame.iloc[-2 * window : -window].mean()
    return _relative_change(recent.tolist(), earlier.tolist())


def m_step_clda(samples, eta, gamma, collection_of, config: GibbsEmConfig):
    """Iterate the eta then gamma maps until both settle.

    Returns (eta, gamma, settled); ``settled`` is False when
    ``inner_max_iterations`` ran out first.
    """
    for _ in range(config.inner_max_iterations):
        new_eta = fixed_point_eta(samples, eta)
        new_gamma = fixed_point_gamma(samples, gamma, collection_of)
        change = _relative_change((new_eta, new_gamma), (eta, gamma))
        eta, gamma = new_eta, new_gamma
        if change < config.inner_tolerance:
            return eta, gamma, True
    logger.warning(
        f"M-step stopped after {config.inner_max_iterations} iterations "
        f"(eta={eta:.6g}, gamma={gamma:.6g}, last change {change:.3g})"
    )
    return eta, gamma, False


def m_step_lda(samples, alpha, eta, config: GibbsEmConfig):
    for _ in range(config.inner_max_iterations):
        new_alpha = fixed_point_alpha_lda(samples, alpha)
        new_eta = fixed_point_eta(samples, eta)
        change = _relative_change((new_alpha, new_eta), (alpha, eta))
        alpha, eta = new_alpha, new_eta
        if change < config.inner_tolerance:
            return alpha, eta, True
    logger.warning(
        f"M-step stopped after {config.inner_max_iterations} iterations "
        f"(alpha={alpha:.6g}, eta={eta:.6g}, last change {change:.3g})"
    )
    return alpha, eta, False


def _e_step_config(config: GibbsEmConfig, model_class):
    return model_class(
        iterations=config.burn_in + config.samples * config.thin,
        burn_in=config.burn_in,
        save_every=config.thin,
    )


def gibbs_em_run(
    corpus: Corpus, K, config: GibbsEmConfig, eta=1.0, gamma=1.0, rng=None
) -> GibbsEmTrajectory:
    """Estimate (eta, gamma) for cLDA with alpha held at ``config.alpha``.

    The outer loop stops once the window means of the estimates move less than
    ``config.tolerance``. With few E-step samples the Monte Carlo noise of a
    single iteration is usually above the default tolerance, so unless
    ``config.window`` is raised the run tends to use all ``max_iterations``
    and ``tail_average`` is the better summary.
    """
    if eta <= 0 or gamma <= 0:
        raise UsageError("Initial eta and gamma must be positive")
    rng = make_rng(config.seed) if rng is None else rng
    chain_config = _e_step_config(config, AgsConfig)
    trajectory = GibbsEmTrajectory("clda")
    trajectory.add(0, eta=eta, gamma=gamma)
    state = None
    for outer in range(1, config.max_iterations + 1):
        h = Hyperparameters(alpha=config.alpha, gamma=gamma, eta=eta)
        trace = ags_run(corpus, K, h, chain_config, init=state, rng=rng)
        samples = [
            GibbsEmSample(recompute_counts(corpus, s.z, K), s.pi) for s in trace.samples
        ]
        state = ModelState(K=K, z=trace.final.z, pi=trace.final.pi)
        new_eta, new_gamma, settled = m_step_clda(samples, eta, gamma, corpus.collection_of, config)
        trajectory.unsettled_m_steps += not settled
        eta, gamma = new_eta, new_gamma
        trajectory.add(outer, eta=eta, gamma=gamma)
        change = _window_change(trajectory, config.window)
        logger.info(f"gibbs-em iteration {outer} eta={eta:.6g} gamma={gamma:.6g} change={change:.3g}")
        if change < config.tolerance:
            trajectory.converged = True
            break
    return trajectory


def lda_gibbs_em_run(
    corpus: Corpus, K, config: GibbsEmConfig, alpha=1.0, eta=1.0, rng=None
) -> GibbsEmTrajectory:
    """Estimate (alpha, eta) of the LDA baseline with CGS as the E-step."""
    if alpha <= 0 or eta <= 0:
        raise UsageError("Initial alpha and eta must be positive")
    rng = make_rng(config.seed) if rng is None else rng
    chain_config = _e_step_config(config, LdaConfig)
    trajectory = GibbsEmTrajectory("lda")
    trajectory.add(0, alpha=alpha, eta=eta)
    state = None
    for outer in range(1, config.max_iterations + 1):
        trace = cgs_run(corpus, K, alpha, eta, chain_config, init=state, rng=rng)
        samples = [GibbsEmSample(recompute_counts(corpus, s.z, K)) for s in trace.samples]
        state = ModelState(K=K, z=trace.final.z)
        new_alpha, new_eta, settled = m_step_lda(samples, alpha, eta, config)
        trajectory.unsettled_m_steps += not settled
        alpha, eta = new_alpha, new_eta
        trajectory.add(outer, alpha=alpha, eta=eta)
        change = _window_change(trajectory, config.window)
        logger.info(
            f"lda gibbs-em iteration {outer} alpha={alpha:.6g} eta={eta:.6g} change={change:.3g}"
        )
        if change < config.tolerance:
            trajectory.converged = True
            break
    return trajectory


def run_replicates(corpus: Corpus, K, config: GibbsEmConfig, replicates=1, model="clda", **initial):
    """Independent Gibbs-EM runs, one seeded sub-stream each, in worker threads."""
    if replicates < 1:
        raise UsageError("replicates must be at least 1")
    if model not in ("clda", "lda"):
        raise UsageError(f"Unknown model '{model}', expected clda or lda")
    run = gibbs_em_run if model == "clda" else lda_gibbs_em_run
    rngs = spawn_rngs(config.seed, replicates)

    def run_one(index):
        logger.info(f"Starting gibbs-em replicate {index + 1}/{replicates}")
        return run(corpus, K, config, rng=rngs[index], **initial)

    if replicates == 1:
        return [run_one(0)]
    with ThreadPoolExecutor(max_workers=replicates) as executor:
        return list(executor.map(run_one, range(replicates)))


def trajectories_frame(trajectories: List[GibbsEmTrajectory]):
    return pd.concat(
        [trajectory.to_frame(replicate) for replicate, trajectory in enumerate(trajectories)],
        ignore_index=True,
    )
