import time
import math
import logging
from dataclasses import dataclass
import numpy as np
from scipy.special import digamma, gammaln
from Chain import ChainTrace
from Config.Run import Hyperparameters, MgsConfig, build
from Corpus import Corpus
from Errors import NumericError, UsageError
from Model import Checkpoint, log_collapsed_joint, recompute_counts
from Numerics import rng_state
from inference.ags import is_save_point, starting_point, sweep_tokens

logger = logging.getLogger(__name__)

# |varphi_k| never drops below this inside densities, gradients and the metric.
MIN_MAGNITUDE = 1e-10


@dataclass
class MgsDiagnostics:
    proposals: int = 0
    accepts: int = 0

    @property
    def acceptance_rate(self):
        return self.accepts / self.proposals if self.proposals else 0.0

    def to_dict(self):
        return {
            "proposals": self.proposals,
            "accepts": self.accepts,
            "acceptance_rate": self.acceptance_rate,
        }


@dataclass
class MmalaProposal:
    varphi: np.ndarray
    xi: np.ndarray
    mean: np.ndarray
    forward_log_density: float
    reverse_log_density: float


def _magnitude(varphi):
    return np.maximum(np.abs(varphi), MIN_MAGNITUDE)


def _sign(varphi):
    return np.where(varphi < 0, -1.0, 1.0)


def varphi_to_pi(varphi):
    magnitude = _magnitude(varphi)
    return magnitude / magnitude.sum()


def log_target_varphi(varphi, n_dk, h: Hyperparameters):
    """Unnormalized log conditional of varphi_j given the collection's counts.

    sum_d sum_k [log Gamma(gamma pi_k + n_dk) - log Gamma(gamma pi_k)]
    + sum_k [(alpha - 1) log|varphi_k| - |varphi_k|], pi_k = |varphi_k| / sum|varphi|.
    """
    magnitude = _magnitude(varphi)
    concentration = h.gamma * magnitude / magnitude.sum()
    data_term = np.sum(gammaln(concentration + n_dk) - gammaln(concentration))
    prior_term = np.sum((h.alpha - 1.0) * np.log(magnitude) - magnitude)
    value = data_term + prior_term
    if not np.isfinite(value):
        raise NumericError("log target of varphi is not finite")
    return float(value)


def grad_log_target(varphi, n_dk, h: Hyperparameters):
    magnitude = _magnitude(varphi)
    total = magnitude.sum()
    pi = magnitude / total
    concentration = h.gamma * pi
    data_gradient = h.gamma * np.sum(digamma(concentration + n_dk) - digamma(concentration), axis=0)
    d_magnitude = (data_gradient - np.dot(pi, data_gradient)) / total
    d_magnitude += (h.alpha - 1.0) / magnitude - 1.0
    return _sign(varphi) * d_magnitude


def mmala_mean(varphi, gradient, epsilon):
    """Drift of the simplified MMALA proposal under G = diag(|varphi|)^-1."""
    half_step = 0.5 * epsilon**2
    return varphi + half_step * _magnitude(varphi) * gradient + half_step * _sign(varphi)


def transition_log_density(target, origin, origin_gradient, epsilon):
    """log N(target; mean(origin), epsilon^2 diag(|origin|))."""
    magnitude = _magnitude(origin)
    mean = mmala_mean(origin, origin_gradient, epsilon)
    variance = epsilon**2 * magnitude
    return float(
        -0.5 * np.sum(np.log(2.0 * math.pi * variance))
        - 0.5 * np.sum((target - mean) ** 2 / variance)
    )


def mmala_propose(rng, varphi, gradient, epsilon, gradient_at) -> MmalaProposal:
    """Draw varphi* ~ N(mean(varphi), epsilon^2 diag(|varphi|)).

    ``gradient_at`` maps a point to its log-target gradient and is used for
    the reverse transition density.
    """
    if epsilon <= 0:
        raise UsageError("epsilon must be positive")
    xi = rng.standard_normal(varphi.shape[0])
    mean = mmala_mean(varphi, gradient, epsilon)
    proposal = mean + epsilon * np.sqrt(_magnitude(varphi)) * xi
    proposal = np.where(proposal == 0.0, MIN_MAGNITUDE, proposal)
    forward = transition_log_density(proposal, varphi, gradient, epsilon)
    reverse = transition_log_density(varphi, proposal, gradient_at(proposal), epsilon)
    return MmalaProposal(proposal, xi, mean, forward, reverse)


def mh_log_ratio(varphi, proposal, n_dk, h, epsilon):
    """log of the Metropolis-Hastings ratio for moving varphi to proposal."""
    forward = transition_log_density(proposal, varphi, grad_log_target(varphi, n_dk, h), epsilon)
    reverse = transition_log_density(varphi, proposal, grad_log_target(proposal, n_dk, h), epsilon)
    return (
        log_target_varphi(proposal, n_dk, h) - log_target_varphi(varphi, n_dk, h) + reverse - forward
    )


def mgs_step(rng, varphi, n_dk, h: Hyperparameters, epsilon):
    """One MMALA update of varphi_j.

    Returns (varphi, pi, accepted, acceptance probability); pi is always
    recomputed from the returned varphi.
    """
    proposal = mmala_propose(
        rng, varphi, grad_log_target(varphi, n_dk, h), epsilon, lambda x: grad_log_target(x, n_dk, h)
    )
    log_ratio = (
        log_target_varphi(proposal.varphi, n_dk, h)
        - log_target_varphi(varphi, n_dk, h)
        + proposal.reverse_log_density
        - proposal.forward_log_density
    )
    u = rng.random()
    accepted = bool(np.log(u) < log_ratio) if u > 0 else True
    if accepted:
        varphi = proposal.varphi
    return varphi, varphi_to_pi(varphi), accepted, float(min(1.0, math.exp(min(log_ratio, 0.0))))


class DualAveraging:
    """Step-size adaptation toward a target acceptance probability."""

    def __init__(self, epsilon, target=0.574, gamma=0.05, t0=10.0, kappa=0.75):
        self.target = target
        self.gamma = gamma
        self.t0 = t0
        self.kappa = kappa
        self.mu = math.log(10.0 * epsilon)
        self.log_epsilon = math.log(epsilon)
        self.log_epsilon_bar = 0.0
        self.h_bar = 0.0
        self.t = 0

    def update(self, acceptance_probability):
        self.t += 1
        weight = 1.0 / (self.t + self.t0)
        self.h_bar = (1.0 - weight) * self.h_bar + weight * (self.target - acceptance_probability)
        self.log_epsilon = self.mu - math.sqrt(self.t) / self.gamma * self.h_bar
        power = self.t ** (-self.kappa)
        self.log_epsilon_bar = power * self.log_epsilon + (1.0 - power) * self.log_epsilon_bar
        return math.exp(self.log_epsilon)

    @property
    def final_epsilon(self):
        return math.exp(self.log_epsilon_bar)

    def state(self):
        return dict(vars(self))

    @classmethod
    def from_state(cls, state):
        adaptation = cls.__new__(cls)
        adaptation.__dict__.update(state)
        return adaptation


def initial_varphi(rng, pi, alpha):
    """Gamma(alpha, 1) magnitudes rescaled to carry the current pi."""
    J, K = pi.shape
    totals = rng.standard_gamma(K * alpha, size=(J, 1))
    return np.maximum(pi * totals, MIN_MAGNITUDE)


def mgs_run(corpus: Corpus, K, h: Hyperparameters, config: MgsConfig, init=None, rng=None) -> ChainTrace:
    if K < 1:
        raise UsageError("K must be at least 1")
    state, start, rng = starting_point(corpus, K, h.alpha, init, rng, config.seed)
    extra = init.extra if isinstance(init, Checkpoint) else {}
    if "varphi" in extra:
        varphi = np.asarray(extra["varphi"], dtype=np.float64)
    else:
        varphi = initial_varphi(rng, state.pi, h.alpha)
    epsilon = float(extra.get("epsilon", config.epsilon))
    adaptation = None
    if config.adapt_epsilon:
        adaptation = (
            DualAveraging.from_state(extra["adaptation"])
            if extra.get("adaptation")
            else DualAveraging(epsilon, target=config.target_acceptance)
        )
    diagnostics = MgsDiagnostics(**extra.get("diagnostics", {}))
    counts = recompute_counts(corpus, state.z, K)
    members = [corpus.documents_in(j) for j in range(corpus.J)]
    trace = ChainTrace("mgs", K, h.model_dump())
    started = time.perf_counter()
    for iteration in range(start + 1, config.iterations + 1):
        sweep_tokens(rng, corpus, state.z, counts, h.gamma * state.pi[corpus.collection_of], h.eta)
        probabilities = []
        for j in range(corpus.J):
            varphi[j], state.pi[j], accepted, probability = mgs_step(
                rng, varphi[j], counts.n_dk[members[j]], h, epsilon
            )
            diagnostics.proposals += 1
            diagnostics.accepts += int(accepted)
            probabilities.append(probability)
        if adaptation is not None and iteration <= config.burn_in:
            epsilon = adaptation.update(float(np.mean(probabilities)))
            if iteration == config.burn_in:
                epsilon = adaptation.final_epsilon
                logger.info(f"mgs step size frozen at epsilon={epsilon:.6g}")
        log_joint = log_collapsed_joint(counts, state.pi, corpus.collection_of, h)
        elapsed = time.perf_counter() - started
        trace.record(
            iteration,
            log_joint,
            elapsed,
            pi=state.pi,
            acceptance_rate=diagnostics.acceptance_rate,
            epsilon=epsilon,
        )
        if is_save_point(iteration, config):
            trace.add_sample(iteration, state.z, state.pi)
            logger.info(
                f"mgs iteration {iteration}/{config.iterations} log_joint={log_joint:.4f} "
                f"acceptance_rate={diagnostics.acceptance_rate:.3f} seconds={elapsed:.2f}"
            )
    trace.diagnostics = diagnostics.to_dict()
    trace.final = Checkpoint(
        "mgs",
        K,
        h.model_dump(),
        config.iterations,
        state.z.copy(),
        state.pi.copy(),
        rng_state(rng),
        extra={
            "varphi": varphi.tolist(),
            "epsilon": epsilon,
            "adaptation": adaptation.state() if adaptation is not None else None,
            "diagnostics": {"proposals": diagnostics.proposals, "accepts": diagnostics.accepts},
        },
    )
    return trace


class MgsInference:
    def __init__(
        self,
        k: int = 10,
        alpha: float = 0.1,
        gamma: float = 1.0,
        eta: float = 0.25,
        epsilon: float = 0.01,
        adapt_epsilon: bool = False,
        iterations: int = 2000,
        burn_in: int = 1000,
        save_every: int = 10,
        seed: int = None,
        **kwargs,
    ):
        self.K = k
        self.h = build(Hyperparameters, alpha=alpha, gamma=gamma, eta=eta)
        self.config = build(
            MgsConfig,
            epsilon=epsilon,
            adapt_epsilon=adapt_epsilon,
            iterations=iterations,
            burn_in=burn_in,
            save_every=save_every,
            seed=seed,
        )

    def run(self, corpus, init=None, rng=None):
        return mgs_run(corpus, self.K, self.h, self.config, init=init, rng=rng)
