import os
import json
import logging
from dataclasses import dataclass
import numpy as np
from Config.Run import SynthConfig, build
from Corpus import Corpus, Vocabulary
from Errors import DataError, UsageError
from Numerics import is_simplex, make_rng, sample_dirichlet, to_simplex

logger = logging.getLogger(__name__)

TRUTH_FILE = "truth.json"
PRESET_DIRECTORY = os.path.join(os.path.dirname(__file__), "presets")
PRESET_ALIASES = {"synth-3.2": "mixture-recovery", "synth-3.3": "hyperparameter-recovery"}


@dataclass
class GroundTruth:
    beta: np.ndarray
    pi: np.ndarray
    theta: np.ndarray
    z: np.ndarray
    hyperparameters: dict

    def check(self):
        for name in ("beta", "pi", "theta"):
            if not is_simplex(getattr(self, name), atol=1e-9):
                raise DataError(f"Ground truth {name} rows are not on the simplex")

    def to_dict(self):
        return {
            "hyperparameters": self.hyperparameters,
            "beta": {"shape": list(self.beta.shape), "values": self.beta.tolist()},
            "pi": {"shape": list(self.pi.shape), "values": self.pi.tolist()},
            "theta": {"shape": list(self.theta.shape), "values": self.theta.tolist()},
            "z": [int(k) for k in self.z],
        }


def get_presets(aliases=False):
    names = [
        os.path.splitext(name)[0]
        for name in os.listdir(PRESET_DIRECTORY)
        if name.endswith(".json")
    ]
    if aliases:
        names += list(PRESET_ALIASES)
    return sorted(names)


def load_preset(name) -> SynthConfig:
    path = os.path.join(PRESET_DIRECTORY, f"{PRESET_ALIASES.get(name, name)}.json")
    if not os.path.exists(path):
        raise UsageError(f"Unknown preset '{name}'. Available: {', '.join(get_presets())}")
    with open(path, "r", encoding="utf-8") as f:
        return build(SynthConfig, **json.load(f))


def _categorical_rows(rng, cumulative, rows):
    """One categorical draw per entry of ``rows`` from the given cumulative table."""
    u = rng.random(rows.shape[0])
    draws = np.empty(rows.shape[0], dtype=np.int64)
    last = cumulative.shape[1] - 1
    for row in np.unique(rows):
        mask = rows == row
        draws[mask] = np.searchsorted(cumulative[row], u[mask] * cumulative[row, -1], side="right")
    return np.minimum(draws, last)


def _fixed(values, shape, name):
    array = to_simplex(np.asarray(values, dtype=np.float64))
    if array.shape != shape:
        raise UsageError(f"{name} must have shape {shape}, got {array.shape}")
    return array


def generate(config: SynthConfig, rng=None):
    """Draw a corpus from the cLDA generative process.

    beta_k ~ Dir(eta), pi_j ~ Dir(alpha), theta_jd ~ Dir(gamma pi_j),
    z ~ Mult(theta_jd), w ~ Mult(beta_z). Tokens of each document are stored
    in ascending word id order with their labels permuted alongside.
    """
    rng = make_rng(config.seed) if rng is None else rng
    K, V, J = config.K, config.V, config.J
    if config.beta is not None:
        beta = _fixed(config.beta, (K, V), "beta")
    else:
        beta = sample_dirichlet(rng, np.full((K, V), config.eta))
    if config.pi is not None:
        pi = _fixed(config.pi, (J, K), "pi")
    else:
        pi = sample_dirichlet(rng, np.full((J, K), config.alpha))
    collection_of = np.repeat(np.arange(J), config.docs_per_collection)
    theta = sample_dirichlet(rng, config.gamma * pi[collection_of])
    D = collection_of.shape[0]
    if config.poisson_length:
        lengths = np.maximum(rng.poisson(config.words_per_document, size=D), 1)
    else:
        lengths = np.full(D, config.words_per_document)
    docs = np.repeat(np.arange(D), lengths)
    z = _categorical_rows(rng, np.cumsum(theta, axis=1), docs)
    words = _categorical_rows(rng, np.cumsum(beta, axis=1), z)
    offsets = np.concatenate([[0], np.cumsum(lengths)])
    for d in range(D):
        start, end = offsets[d], offsets[d + 1]
        order = np.argsort(words[start:end], kind="stable")
        words[start:end] = words[start:end][order]
        z[start:end] = z[start:end][order]
    corpus = Corpus(words, offsets, collection_of, Vocabulary.anonymous(V), J)
    truth = GroundTruth(beta, pi, theta, z, config.hyperparameters.model_dump())
    logger.info(f"Generated {D} documents, {corpus.num_tokens} tokens (J={J}, K={K}, V={V})")
    return corpus, truth


def save_truth(truth: GroundTruth, directory):
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, TRUTH_FILE)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(truth.to_dict(), f)
        f.write("\n")
    return path


def load_truth(path) -> GroundTruth:
    if os.path.isdir(path):
        path = os.path.join(path, TRUTH_FILE)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
        truth = GroundTruth(
            beta=np.asarray(data["beta"]["values"], dtype=np.float64),
            pi=np.asarray(data["pi"]["values"], dtype=np.float64),
            theta=np.asarray(data["theta"]["values"], dtype=np.float64),
            z=np.asarray(data["z"], dtype=np.int64),
            hyperparameters=data["hyperparameters"],
        )
    except (OSError, json.JSONDecodeError, KeyError) as e:
        raise DataError(f"Cannot read ground truth {path}: {e}") from e
    truth.check()
    return truth
