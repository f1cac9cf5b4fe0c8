import os
import json
import logging
from dataclasses import dataclass
from typing import List, Optional
import numpy as np
import pandas as pd
from Chain import Chain, get_chains
from Commands import Commands
from Config import Config
from Config.Run import Hyperparameters
from Corpus import Corpus, load_training_corpus
from Errors import DataError, UsageError
from Evaluation import (
    RaoBlackwellEstimates,
    coherence_frame,
    iterations_to_region,
    mixing_diagnostics,
    perplexity_from_estimates,
    perplexity_trajectory,
    rao_blackwell_clda,
    rao_blackwell_lda,
    top_words,
    topic_distance_matrix,
    topic_size,
)
from Model import recompute_counts
from Synthetic import TRUTH_FILE, load_truth
from inference.vem import load_params

CFG = Config()
logger = logging.getLogger(__name__)

METRICS = ("perplexity", "coherence", "size", "mixing", "region")
SAMPLERS = ("ags", "mgs")
EXPORTS = ("pi", "theta", "beta", "top-words", "topic-dist")


@dataclass
class ModelEstimates:
    """Point estimates and per-sample estimates read back from one run directory."""

    algorithm: str
    K: int
    iterations: List[int]
    samples: List[RaoBlackwellEstimates]
    sizes: np.ndarray
    pi: Optional[np.ndarray]
    pi_iterations: List[int]
    pi_path: List[np.ndarray]

    @property
    def theta(self):
        return np.mean([s.theta for s in self.samples], axis=0)

    @property
    def beta(self):
        return np.mean([s.beta for s in self.samples], axis=0)


def _load_json(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"Cannot read {path}: {e}") from e


def load_estimates(chain: Chain, train: Corpus) -> ModelEstimates:
    metadata = chain.load_metadata()
    algorithm, K = metadata["algorithm"], metadata["K"]
    if algorithm == "vem":
        params = load_params(chain.directory)
        if params.rho.shape[0] != train.num_documents or params.lam.shape[1] != train.V:
            raise DataError(f"{chain.directory} was trained on a different corpus")
        h = Hyperparameters(**metadata["hyperparameters"])
        estimate = RaoBlackwellEstimates(params.theta_estimate(), params.beta_estimate())
        sizes = np.rint(params.lam.sum(axis=1) - train.V * h.eta).astype(np.int64)
        history = _load_json(chain.path("pi.json"))
        return ModelEstimates(
            algorithm, K, [len(history["iterations"])], [estimate], sizes, params.pi_estimate(),
            history["iterations"], [np.asarray(p) for p in history["pi"]],
        )
    trace = chain.load_trace()
    saved = trace.samples
    if not saved:
        logger.warning(f"{chain.directory} has no saved samples; using its final state")
        saved = [trace.final]
    hyper = trace.hyperparameters
    estimates = []
    for sample in saved:
        counts = recompute_counts(train, sample.z, K)
        if algorithm == "lda-cgs":
            estimates.append(rao_blackwell_lda(counts, hyper["alpha"], hyper["eta"]))
        else:
            estimates.append(
                rao_blackwell_clda(counts, sample.pi, train.collection_of, Hyperparameters(**hyper))
            )
    return ModelEstimates(
        algorithm,
        K,
        [int(s.iteration) for s in saved],
        estimates,
        topic_size(saved[-1].z, K),
        trace.posterior_mean_pi() if algorithm != "lda-cgs" else None,
        trace.iterations if trace.pi_path else [],
        trace.pi_path,
    )


def _chain_corpora(chain: Chain, corpus_dir, split_path=None):
    metadata = chain.load_metadata()
    corpus_dir = corpus_dir or metadata.get("corpus")
    if corpus_dir is None:
        raise UsageError("A --corpus directory is needed for this model")
    return load_training_corpus(
        corpus_dir,
        split_path,
        use_split=metadata.get("split") is not None or split_path is not None,
        single_collection=metadata.get("single_collection", False),
    )


class evaluation_commands(Commands):
    def __init__(self):
        self.commands = {
            "evaluate": self.evaluate,
            "export": self.export,
        }

    def evaluate(
        self,
        model: str,
        out: str,
        corpus: str = None,
        split: str = None,
        metrics: str = "perplexity,coherence,size",
        top_m: int = None,
        max_lag: int = None,
        region_threshold: float = None,
    ) -> dict:
        requested = [m.strip() for m in metrics.split(",") if m.strip()]
        unknown = sorted(set(requested) - set(METRICS))
        if unknown:
            raise UsageError(f"Unknown metrics {unknown}; choose from {', '.join(METRICS)}")
        top_m = top_m or CFG.CLDA_TOP_M
        max_lag = CFG.CLDA_MAX_LAG if max_lag is None else max_lag
        region_threshold = CFG.CLDA_REGION_THRESHOLD if region_threshold is None else region_threshold
        report = {"chains": []}
        coherence_frames, acf_frames = [], []
        chains = get_chains(model)
        for index, chain in enumerate(chains):
            metadata = chain.load_metadata()
            full, train, held_out = _chain_corpora(chain, corpus, split)
            estimates = load_estimates(chain, train)
            entry = {"chain": index + 1, "algorithm": estimates.algorithm}
            if "perplexity" in requested:
                if held_out is None:
                    raise UsageError("Perplexity needs a held-out split (--split)")
                if metadata.get("split") is None:
                    raise UsageError(f"{chain.directory} was trained on the full corpus")
                if metadata["split"] != held_out.fingerprint():
                    raise UsageError(f"{chain.directory} was trained on a different split")
                test_docs, test_words = held_out.test_words(full)
                entry["perplexity"] = perplexity_from_estimates(
                    test_docs, test_words, estimates.samples
                )
                if len(estimates.samples) > 1:
                    entry["trajectory"] = perplexity_trajectory(
                        test_docs, test_words, estimates.iterations, estimates.samples
                    ).to_dict(orient="records")
            if "coherence" in requested or "size" in requested:
                documents = (
                    held_out.training_documents() if held_out is not None else range(full.num_documents)
                )
                reference = full.subset(list(documents))
                if "coherence" in requested:
                    frame = coherence_frame(
                        estimates.beta, reference, estimates.sizes, min(top_m, reference.V)
                    )
                else:
                    frame = pd.DataFrame(
                        {"topic": np.arange(1, estimates.K + 1), "size": estimates.sizes}
                    )
                if "size" not in requested:
                    frame = frame.drop(columns="size")
                if len(chains) > 1:
                    frame.insert(0, "chain", index + 1)
                coherence_frames.append(frame)
                if "coherence" in requested:
                    entry["mean_coherence"] = float(frame["coherence"].mean())
            if "mixing" in requested:
                ess, acf = self._mixing(chain, estimates, max_lag)
                entry["mixing"] = {
                    "from_iteration": int(estimates.iterations[0]),
                    "min_ess": float(ess["ess"].min()),
                    "ess": ess.to_dict(orient="records"),
                }
                if len(chains) > 1:
                    acf.insert(0, "chain", index + 1)
                acf_frames.append(acf)
            if "region" in requested:
                truth_pi = self._true_mixtures(chain, estimates, corpus or metadata.get("corpus"))
                entry["region_threshold"] = region_threshold
                entry["iterations_to_region"] = iterations_to_region(
                    estimates.pi_iterations, estimates.pi_path, truth_pi, region_threshold
                )
            report["chains"].append(entry)
        if "perplexity" in requested:
            report["perplexity"] = float(np.mean([c["perplexity"] for c in report["chains"]]))
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "eval.json"), "w", encoding="utf-8", newline="\n") as f:
            json.dump(report, f, indent=2)
            f.write("\n")
        if coherence_frames:
            pd.concat(coherence_frames, ignore_index=True).to_csv(
                os.path.join(out, "coherence.csv"), index=False, lineterminator="\n"
            )
        if acf_frames:
            pd.concat(acf_frames, ignore_index=True).to_csv(
                os.path.join(out, "acf.csv"), index=False, lineterminator="\n"
            )
        summary = {key: value for key, value in report.items() if key != "chains"}
        summary["chains"] = [
            {k: v for k, v in c.items() if k != "trajectory"} for c in report["chains"]
        ]
        return summary

    def _mixing(self, chain: Chain, estimates: ModelEstimates, max_lag):
        """Diagnostics of the post-burn-in part of a sampler's pi trace."""
        if estimates.algorithm not in SAMPLERS:
            raise UsageError(
                f"Mixing diagnostics need an ags or mgs chain, {chain.directory} is {estimates.algorithm}"
            )
        start = estimates.iterations[0]
        path = [pi for it, pi in zip(estimates.pi_iterations, estimates.pi_path) if it >= start]
        return mixing_diagnostics(path, max_lag)

    def _true_mixtures(self, chain: Chain, estimates: ModelEstimates, corpus_dir):
        if not estimates.pi_path:
            raise UsageError(f"{estimates.algorithm} models carry no collection mixtures")
        truth_path = os.path.join(corpus_dir or "", TRUTH_FILE)
        if not os.path.exists(truth_path):
            raise UsageError(f"Iterations to region need a ground truth at {truth_path}")
        truth = load_truth(truth_path)
        if truth.pi.shape != estimates.pi_path[0].shape:
            raise DataError(
                f"Ground truth mixtures have shape {truth.pi.shape} but {chain.directory} "
                f"estimates {estimates.pi_path[0].shape}"
            )
        return truth.pi

    def export(
        self,
        model: str,
        what: str,
        out: str,
        corpus: str = None,
        top_m: int = None,
    ) -> dict:
        if what not in EXPORTS:
            raise UsageError(f"Unknown export '{what}'; choose from {', '.join(EXPORTS)}")
        top_m = top_m or CFG.CLDA_TOP_M
        chains = get_chains(model)
        os.makedirs(out, exist_ok=True)
        written = []
        for index, chain in enumerate(chains):
            _, train, _ = _chain_corpora(chain, corpus)
            estimates = load_estimates(chain, train)
            prefix = "" if len(chains) == 1 else f"chain-{index + 1}-"
            path = os.path.join(out, prefix + self._file_name(what))
            self._frame(what, estimates, train, top_m).to_csv(path, index=False, lineterminator="\n")
            written.append(path)
        return {"export": what, "files": written}

    def _file_name(self, what):
        return {
            "pi": "pi.csv",
            "theta": "theta.csv",
            "beta": "beta.csv",
            "top-words": "top_words.csv",
            "topic-dist": "topic_dist.csv",
        }[what]

    def _frame(self, what, estimates: ModelEstimates, train: Corpus, top_m):
        K = estimates.K
        topics = [f"topic_{k + 1}" for k in range(K)]
        if what == "pi":
            if not estimates.pi_path:
                raise UsageError(f"{estimates.algorithm} models carry no collection mixtures")
            J = estimates.pi_path[0].shape[0]
            columns = [f"pi_{j + 1}_{k + 1}" for j in range(J) for k in range(K)]
            frame = pd.DataFrame(
                np.asarray([p.ravel() for p in estimates.pi_path]), columns=columns
            )
            frame.insert(0, "iteration", estimates.pi_iterations)
            return frame
        if what == "theta":
            frame = pd.DataFrame(estimates.theta, columns=topics)
            frame.insert(0, "collection", train.collection_of + 1)
            frame.insert(0, "document", np.arange(1, train.num_documents + 1))
            return frame
        if what == "beta":
            frame = pd.DataFrame(estimates.beta, columns=train.vocabulary.terms)
            frame.insert(0, "topic", np.arange(1, K + 1))
            return frame
        if what == "top-words":
            beta = estimates.beta
            rows = [
                {
                    "topic": k + 1,
                    "rank": rank + 1,
                    "word_id": int(v),
                    "term": train.vocabulary[int(v)],
                    "probability": float(beta[k, v]),
                }
                for k, words in enumerate(top_words(beta, min(top_m, train.V)))
                for rank, v in enumerate(words)
            ]
            return pd.DataFrame(rows)
        frame = pd.DataFrame(topic_distance_matrix(estimates.beta), columns=topics)
        frame.insert(0, "topic", np.arange(1, K + 1))
        return frame
