"""Variational EM for cLDA.

q(beta, pi, theta, z) = prod_k Dir(beta_k | lambda_k) prod_j Dir(pi_j | a_j omega_j)
prod_jd Dir(theta_jd | rho_jd) prod_jdi Mult(z_jdi | phi_jdi).

E log Gamma(gamma pi_jk) has no closed form under q and is replaced by the upper
bound log Gamma(gamma omega_k) + gamma (1 - omega_k) / a
+ (gamma omega_k - 1)(E log pi_k - log omega_k), so the reported ELBO is a
lower bound of the usual one.
"""
import os
import json
import time
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional
import numpy as np
import pandas as pd
from scipy.special import digamma, entr, gammaln
from Chain import Chain, PI_FILE
from Config.Run import Hyperparameters, VemConfig, build
from Corpus import Corpus
from Errors import DataError, NumericError, UsageError
from Numerics import dirichlet_expectation, make_rng, normalize_log_weights, tetragamma, trigamma

logger = logging.getLogger(__name__)

ELBO_FILE = "elbo.csv"
PARAMS_FILE = "params.json"

ELBO_TERMS = (
    "beta_prior",
    "pi_prior",
    "theta_prior",
    "z_likelihood",
    "w_likelihood",
    "beta_entropy",
    "pi_entropy",
    "theta_entropy",
    "z_entropy",
)

MIN_CURVATURE = 1e-8
MAX_HALVINGS = 50


@dataclass
class VariationalParams:
    lam: np.ndarray
    a: np.ndarray
    omega: np.ndarray
    rho: np.ndarray
    phi: np.ndarray

    @property
    def tau(self):
        return self.a[:, None] * self.omega

    def pi_estimate(self):
        """E_q[pi_j] = omega_j."""
        return self.omega.copy()

    def theta_estimate(self):
        return self.rho / self.rho.sum(axis=1, keepdims=True)

    def beta_estimate(self):
        return self.lam / self.lam.sum(axis=1, keepdims=True)

    def check(self):
        if np.any(self.lam <= 0) or np.any(self.rho <= 0) or np.any(self.a <= 0):
            raise NumericError("Variational Dirichlet parameters must be positive")
        if np.any(self.omega <= 0) or not np.allclose(self.omega.sum(axis=1), 1.0, atol=1e-10):
            raise NumericError("omega left the simplex")
        if not np.allclose(self.phi.sum(axis=1), 1.0, atol=1e-10):
            raise NumericError("phi rows do not sum to one")

    def to_dict(self):
        return {
            "lambda": self.lam.tolist(),
            "a": self.a.tolist(),
            "omega": self.omega.tolist(),
            "rho": self.rho.tolist(),
        }


@dataclass
class ElboReport:
    iteration: int
    terms: Dict[str, float]

    @property
    def total(self):
        return float(sum(self.terms[name] for name in ELBO_TERMS))

    def to_row(self):
        row = {"iteration": self.iteration}
        row.update({name: self.terms[name] for name in ELBO_TERMS})
        row["total"] = self.total
        return row


@dataclass
class TauUpdate:
    a: float
    omega: np.ndarray
    rounds: int
    failed: bool = False


@dataclass
class VemResult:
    K: int
    params: VariationalParams
    hyperparameters: Hyperparameters
    history: List[ElboReport] = field(default_factory=list)
    pi_path: List[np.ndarray] = field(default_factory=list)
    converged: bool = False
    tau_failures: int = 0
    seconds: float = 0.0

    @property
    def algorithm(self):
        return "vem"

    def elbo_frame(self):
        return pd.DataFrame([report.to_row() for report in self.history])

    def save(self, directory, metadata: Optional[dict] = None):
        chain = Chain(directory)
        os.makedirs(directory, exist_ok=True)
        self.elbo_frame().to_csv(chain.path(ELBO_FILE), index=False, lineterminator="\n")
        with open(chain.path(PARAMS_FILE), "w", encoding="utf-8", newline="\n") as f:
            json.dump(self.params.to_dict(), f)
            f.write("\n")
        chain._write_json(
            PI_FILE,
            {
                "iterations": [report.iteration for report in self.history],
                "pi": [pi.tolist() for pi in self.pi_path],
            },
        )
        metadata = dict(metadata or {})
        metadata.update(
            {
                "algorithm": "vem",
                "K": self.K,
                "hyperparameters": self.hyperparameters.model_dump(),
                "diagnostics": {
                    "converged": self.converged,
                    "outer_iterations": len(self.history),
                    "tau_failures": self.tau_failures,
                },
            }
        )
        chain.save_metadata(metadata)


def load_params(directory) -> VariationalParams:
    path = os.path.join(directory, PARAMS_FILE)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"Cannot read {path}: {e}") from e
    rho = np.asarray(data["rho"], dtype=np.float64)
    return VariationalParams(
        lam=np.asarray(data["lambda"], dtype=np.float64),
        a=np.asarray(data["a"], dtype=np.float64),
        omega=np.asarray(data["omega"], dtype=np.float64),
        rho=rho,
        phi=np.zeros((0, rho.shape[1])),
    )


# ---------------------------------------------------------------- E-step


def update_phi(doc_words, rho_d, elog_beta):
    """Responsibilities of every token in one document, shape (n_d, K).

    phi_ik is proportional to exp(E log theta_dk + E log beta_k,w_i).
    """
    elog_theta = dirichlet_expectation(rho_d)
    return normalize_log_weights(elog_theta[None, :] + elog_beta[:, doc_words].T, axis=1)


def update_rho(phi_d, omega_j, gamma):
    """rho_dk = gamma omega_jk + sum_i phi_dik, so sum_k rho_dk = gamma + n_d."""
    return gamma * np.asarray(omega_j) + np.asarray(phi_d).sum(axis=0)


def update_lambda(corpus: Corpus, phi, eta):
    """lambda_kv = eta + sum over tokens of term v of phi_ik."""
    K = phi.shape[1]
    lam = np.full((K, corpus.V), float(eta))
    for k in range(K):
        lam[k] += np.bincount(corpus.words, weights=phi[:, k], minlength=corpus.V)
    return lam


def e_step_document(doc_words, omega_j, elog_beta, gamma, max_iterations, tolerance):
    """Alternate phi and rho for one document until rho settles."""
    K = elog_beta.shape[0]
    unique, inverse, term_counts = np.unique(doc_words, return_inverse=True, return_counts=True)
    rho = gamma * omega_j + len(doc_words) / K
    for _ in range(max_iterations):
        phi_unique = update_phi(unique, rho, elog_beta)
        new_rho = gamma * omega_j + term_counts @ phi_unique
        change = np.max(np.abs(new_rho - rho) / rho)
        rho = new_rho
        if change < tolerance:
            break
    phi_unique = update_phi(unique, rho, elog_beta)
    return phi_unique[inverse], gamma * omega_j + term_counts @ phi_unique


def e_step(corpus: Corpus, params: VariationalParams, h: Hyperparameters, config: VemConfig):
    elog_beta = dirichlet_expectation(params.lam)
    for d in range(corpus.num_documents):
        start, end = corpus.offsets[d], corpus.offsets[d + 1]
        phi_d, rho_d = e_step_document(
            corpus.words[start:end],
            params.omega[corpus.collection_of[d]],
            elog_beta,
            h.gamma,
            config.inner_max_iterations,
            config.inner_tolerance,
        )
        params.phi[start:end] = phi_d
        params.rho[d] = rho_d


# ---------------------------------------------------------------- tau block


def _tau_coefficients(a, omega, alpha, gamma, D):
    K = omega.shape[0]
    B = alpha + D - a * omega - gamma * D * omega
    C = K * alpha - a + D * (K - gamma)
    return B, C


def tau_objective(a, omega, elog_theta_sum, alpha, gamma, D):
    """The part of the ELBO that depends on (a_j, omega_j).

    ``elog_theta_sum`` is sum_d E log theta_jd over the collection's D documents.
    """
    K = omega.shape[0]
    B, C = _tau_coefficients(a, omega, alpha, gamma, D)
    return float(
        np.sum(B * digamma(a * omega))
        - C * digamma(a)
        + np.sum(gammaln(a * omega))
        - gammaln(a)
        - D * np.sum(gammaln(gamma * omega))
        - D * gamma * (K - 1) / a
        - D * np.sum((1.0 - gamma * omega) * np.log(omega))
        + gamma * np.dot(omega, elog_theta_sum)
    )


def tau_omega_gradient(a, omega, elog_theta_sum, alpha, gamma, D):
    B, _ = _tau_coefficients(a, omega, alpha, gamma, D)
    return (
        a * B * trigamma(a * omega)
        - gamma * D * digamma(a * omega)
        - D * gamma * digamma(gamma * omega)
        - D / omega
        + D * gamma * (1.0 + np.log(omega))
        + gamma * elog_theta_sum
    )


def tau_omega_hessian(a, omega, alpha, gamma, D):
    """Diagonal of the Hessian in omega (the objective is separable in omega_k)."""
    B, _ = _tau_coefficients(a, omega, alpha, gamma, D)
    return (
        a**2 * B * tetragamma(a * omega)
        - a * (a + 2.0 * gamma * D) * trigamma(a * omega)
        - D * gamma**2 * trigamma(gamma * omega)
        + D / omega**2
        + D * gamma / omega
    )


def tau_a_gradient(a, omega, alpha, gamma, D):
    K = omega.shape[0]
    B, _ = _tau_coefficients(a, omega, alpha, gamma, D)
    return float(
        np.sum(B * (omega * trigamma(a * omega) - trigamma(a))) + (K - 1) * gamma * D / a**2
    )


def tau_a_hessian(a, omega, alpha, gamma, D):
    K = omega.shape[0]
    B, _ = _tau_coefficients(a, omega, alpha, gamma, D)
    return float(
        np.sum(
            -omega * (omega * trigamma(a * omega) - trigamma(a))
            + B * (omega**2 * tetragamma(a * omega) - tetragamma(a))
        )
        - 2.0 * (K - 1) * gamma * D / a**3
    )


def _safe_curvature(hessian):
    return -np.maximum(np.abs(hessian), MIN_CURVATURE)


def constrained_newton_step(gradient, hessian):
    """Newton direction for a separable objective under sum(omega) = 1.

    The returned step sums to zero; a non-negative curvature entry is replaced
    by a negative one so the step is an ascent direction.
    """
    curvature = _safe_curvature(np.asarray(hessian, dtype=np.float64))
    ratio = gradient / curvature
    inverse = 1.0 / curvature
    step = (ratio.sum() / inverse.sum()) * inverse - ratio
    return step - step.mean()


def _backtrack(objective, current, step, value):
    """Largest step / 2^t keeping every coordinate positive without lowering the objective."""
    scale = 1.0
    for _ in range(MAX_HALVINGS):
        candidate = current + scale * step
        if np.all(candidate > 0):
            candidate_value = objective(candidate)
            if np.isfinite(candidate_value) and candidate_value >= value:
                return candidate, candidate_value
        scale *= 0.5
    return None, value


def update_tau(a, omega, elog_theta_sum, alpha, gamma, D, max_rounds=100, tolerance=1e-8):
    """Alternate the constrained omega Newton step and the scalar a Newton step."""
    omega = np.asarray(omega, dtype=np.float64).copy()
    a = float(a)
    failed = False
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        value = tau_objective(a, omega, elog_theta_sum, alpha, gamma, D)
        step = constrained_newton_step(
            tau_omega_gradient(a, omega, elog_theta_sum, alpha, gamma, D),
            tau_omega_hessian(a, omega, alpha, gamma, D),
        )
        new_omega, value = _backtrack(
            lambda x: tau_objective(a, x, elog_theta_sum, alpha, gamma, D), omega, step, value
        )
        if new_omega is None:
            new_omega = omega
            failed = failed or bool(np.max(np.abs(step) / omega) > tolerance)
        # Keep the simplex exact against rounding.
        new_omega = new_omega / new_omega.sum()
        a_step = -tau_a_gradient(a, new_omega, alpha, gamma, D) / _safe_curvature(
            tau_a_hessian(a, new_omega, alpha, gamma, D)
        )
        new_a, _ = _backtrack(
            lambda x: tau_objective(float(x[0]), new_omega, elog_theta_sum, alpha, gamma, D),
            np.array([a]),
            np.array([a_step]),
            value,
        )
        if new_a is None:
            new_a = np.array([a])
            failed = failed or abs(a_step) / a > tolerance
        change = max(
            float(np.max(np.abs(new_omega - omega) / omega)), abs(float(new_a[0]) - a) / a
        )
        omega, a = new_omega, float(new_a[0])
        if change < tolerance:
            break
    return TauUpdate(a, omega, rounds, failed)


# ---------------------------------------------------------------- bound


def _dirichlet_log_normalizer(params):
    params = np.asarray(params, dtype=np.float64)
    return gammaln(params.sum(axis=-1)) - np.sum(gammaln(params), axis=-1)


def _log_gamma_bound(a, omega, elog_pi, gamma):
    """Upper bound of E_q log Gamma(gamma pi_k), per (j, k)."""
    return (
        gammaln(gamma * omega)
        + gamma * (1.0 - omega) / a[:, None]
        + (gamma * omega - 1.0) * (elog_pi - np.log(omega))
    )


def compute_elbo(corpus: Corpus, params: VariationalParams, h: Hyperparameters, iteration=0) -> ElboReport:
    K, V = params.lam.shape
    J = params.omega.shape[0]
    elog_beta = dirichlet_expectation(params.lam)
    elog_pi = dirichlet_expectation(params.tau)
    elog_theta = dirichlet_expectation(params.rho)
    doc_omega = params.omega[corpus.collection_of]
    bound = _log_gamma_bound(params.a, params.omega, elog_pi, h.gamma)

    terms = {
        "beta_prior": K * (gammaln(V * h.eta) - V * gammaln(h.eta))
        + (h.eta - 1.0) * np.sum(elog_beta),
        "pi_prior": J * (gammaln(K * h.alpha) - K * gammaln(h.alpha))
        + (h.alpha - 1.0) * np.sum(elog_pi),
        "theta_prior": corpus.num_documents * gammaln(h.gamma)
        - np.sum(bound[corpus.collection_of])
        + np.sum((h.gamma * doc_omega - 1.0) * elog_theta),
        "z_likelihood": np.sum(params.phi * elog_theta[corpus.docs]),
        "w_likelihood": np.sum(params.phi * elog_beta[:, corpus.words].T),
        "beta_entropy": -np.sum(_dirichlet_log_normalizer(params.lam))
        - np.sum((params.lam - 1.0) * elog_beta),
        "pi_entropy": -np.sum(_dirichlet_log_normalizer(params.tau))
        - np.sum((params.tau - 1.0) * elog_pi),
        "theta_entropy": -np.sum(_dirichlet_log_normalizer(params.rho))
        - np.sum((params.rho - 1.0) * elog_theta),
        "z_entropy": np.sum(entr(params.phi)),
    }
    for name, value in terms.items():
        if not np.isfinite(value):
            raise NumericError(f"ELBO term {name} is not finite")
    return ElboReport(iteration, {name: float(value) for name, value in terms.items()})


# ---------------------------------------------------------------- hyperparameters


def newton_positive(x, gradient_hessian, max_iterations=100, tolerance=1e-8):
    """1-D Newton ascent that halves any step leaving the positive half-line."""
    x = float(x)
    for _ in range(max_iterations):
        gradient, hessian = gradient_hessian(x)
        step = -gradient / _safe_curvature(hessian)
        for _ in range(MAX_HALVINGS):
            if x + step > 0:
                break
            step *= 0.5
        else:
            logger.warning(f"Newton step stalled at x={x:.6g}")
            return x
        x += step
        if abs(step) / x < tolerance:
            break
    return x


def alpha_gradient_hessian(alpha, elog_pi):
    J, K = elog_pi.shape
    gradient = J * K * (digamma(K * alpha) - digamma(alpha)) + np.sum(elog_pi)
    hessian = J * K * (K * trigamma(K * alpha) - trigamma(alpha))
    return float(gradient), float(hessian)


def eta_gradient_hessian(eta, elog_beta):
    K, V = elog_beta.shape
    gradient = K * V * (digamma(V * eta) - digamma(eta)) + np.sum(elog_beta)
    hessian = K * V * (V * trigamma(V * eta) - trigamma(eta))
    return float(gradient), float(hessian)


def gamma_gradient_hessian(gamma, params: VariationalParams, collection_of):
    omega = params.omega[collection_of]
    a = params.a[collection_of][:, None]
    elog_pi = dirichlet_expectation(params.tau)[collection_of]
    elog_theta = dirichlet_expectation(params.rho)
    per_document = (
        digamma(gamma)
        - np.sum(
            omega * digamma(gamma * omega)
            + (1.0 - omega) / a
            + omega * (elog_pi - np.log(omega)),
            axis=1,
        )
        + np.sum(omega * elog_theta, axis=1)
    )
    hessian = np.sum(trigamma(gamma) - np.sum(omega**2 * trigamma(gamma * omega), axis=1))
    return float(per_document.sum()), float(hessian)


def update_hyperparameters(params: VariationalParams, h: Hyperparameters, collection_of):
    alpha = newton_positive(
        h.alpha, lambda x: alpha_gradient_hessian(x, dirichlet_expectation(params.tau))
    )
    eta = newton_positive(h.eta, lambda x: eta_gradient_hessian(x, dirichlet_expectation(params.lam)))
    gamma = newton_positive(h.gamma, lambda x: gamma_gradient_hessian(x, params, collection_of))
    return Hyperparameters(alpha=alpha, gamma=gamma, eta=eta)


# ---------------------------------------------------------------- driver


def initial_params(rng, corpus: Corpus, K, h: Hyperparameters) -> VariationalParams:
    jitter = rng.gamma(100.0, 1.0 / 100.0, size=(K, corpus.V))
    lam = h.eta + corpus.term_counts()[None, :] / K * jitter
    omega = np.full((corpus.J, K), 1.0 / K)
    a = np.full(corpus.J, K * h.alpha)
    rho = h.gamma * omega[corpus.collection_of] + corpus.lengths[:, None] / K
    phi = np.full((corpus.num_tokens, K), 1.0 / K)
    return VariationalParams(lam=lam, a=a, omega=omega, rho=rho, phi=phi)


def vem_run(corpus: Corpus, K, h: Hyperparameters, config: VemConfig, rng=None) -> VemResult:
    if K < 1:
        raise UsageError("K must be at least 1")
    rng = make_rng(config.seed) if rng is None else rng
    params = initial_params(rng, corpus, K, h)
    result = VemResult(K, params, h)
    members = [corpus.documents_in(j) for j in range(corpus.J)]
    started = time.perf_counter()
    previous = None
    for iteration in range(1, config.max_iterations + 1):
        e_step(corpus, params, h, config)
        params.lam = update_lambda(corpus, params.phi, h.eta)
        elog_theta = dirichlet_expectation(params.rho)
        for j, documents in enumerate(members):
            update = update_tau(
                params.a[j],
                params.omega[j],
                elog_theta[documents].sum(axis=0),
                h.alpha,
                h.gamma,
                len(documents),
                config.tau_max_rounds,
                config.tau_tolerance,
            )
            params.a[j], params.omega[j] = update.a, update.omega
            if update.failed:
                result.tau_failures += 1
                logger.warning(f"tau Newton update for collection {j + 1} kept its previous value")
        if config.optimize_hyperparameters:
            h = update_hyperparameters(params, h, corpus.collection_of)
            result.hyperparameters = h
        params.check()
        report = compute_elbo(corpus, params, h, iteration)
        result.history.append(report)
        result.pi_path.append(params.pi_estimate())
        elapsed = time.perf_counter() - started
        logger.info(f"vem iteration {iteration} elbo={report.total:.4f} seconds={elapsed:.2f}")
        if previous is not None and abs(report.total - previous) / abs(previous) < config.tolerance:
            result.converged = True
            break
        previous = report.total
    result.seconds = time.perf_counter() - started
    return result


class VemInference:
    def __init__(
        self,
        k: int = 10,
        alpha: float = 0.1,
        gamma: float = 1.0,
        eta: float = 0.25,
        max_iterations: int = 100,
        tolerance: float = 1e-5,
        optimize_hyperparameters: bool = False,
        seed: int = None,
        **kwargs,
    ):
        self.K = k
        self.h = build(Hyperparameters, alpha=alpha, gamma=gamma, eta=eta)
        self.config = build(
            VemConfig,
            max_iterations=max_iterations,
            tolerance=tolerance,
            optimize_hyperparameters=optimize_hyperparameters,
            seed=seed,
        )

    def run(self, corpus, init=None, rng=None):
        return vem_run(corpus, self.K, self.h, self.config, rng=rng)
