import os
import json
import logging
import numpy as np
import pandas as pd
from Chain import Chain, add_chain
from Commands import Commands
from Config import Config
from Config.Run import GibbsEmConfig, Hyperparameters, LdaConfig, RunSettings, build
from Corpus import Corpus, load_training_corpus
from Errors import UsageError
from Evaluation import align_topics, aligned_l1, rao_blackwell_lda
from GibbsEM import TRAJECTORY_FILE, run_replicates, trajectories_frame
from Model import recompute_counts
from Numerics import make_rng
from Synthetic import TRUTH_FILE, load_truth
from inference import Inference, get_inference_options, run_chains
from inference.lda_cgs import cgs_run, collection_mixture

CFG = Config()
logger = logging.getLogger(__name__)

MIXTURES_FILE = "mixtures.csv"


def _settings(config, **flags):
    settings = RunSettings(config)
    settings.merge(**flags)
    if settings.get("seed") is None:
        settings.merge(seed=CFG.CLDA_SEED)
    return settings


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")


class training_commands(Commands):
    def __init__(self):
        self.commands = {
            "train": self.train,
            "estimate-hyper": self.estimate_hyper,
            "compare": self.compare,
        }

    def train(
        self,
        algo: str,
        corpus: str,
        out: str,
        k: int = None,
        alpha: float = None,
        gamma: float = None,
        eta: float = None,
        epsilon: float = None,
        adapt_epsilon: bool = None,
        iterations: int = None,
        burn_in: int = None,
        save_every: int = None,
        max_iterations: int = None,
        tolerance: float = None,
        optimize_hyperparameters: bool = None,
        seed: int = None,
        chains: int = None,
        single_collection: bool = False,
        split: str = None,
        full_corpus: bool = False,
        config: str = None,
    ) -> dict:
        settings = _settings(
            config,
            algo=algo,
            k=k,
            alpha=alpha,
            gamma=gamma,
            eta=eta,
            epsilon=epsilon,
            adapt_epsilon=adapt_epsilon,
            iterations=iterations,
            burn_in=burn_in,
            save_every=save_every,
            max_iterations=max_iterations,
            tolerance=tolerance,
            optimize_hyperparameters=optimize_hyperparameters,
            seed=seed,
            chains=chains,
        )
        algo = settings.get("algo")
        if algo is None:
            raise UsageError("train needs --algo")
        if algo == "mgs" and settings.get("epsilon") is None:
            settings.merge(epsilon=CFG.CLDA_EPSILON)
        try:
            options = get_inference_options(algo)
        except (ModuleNotFoundError, AttributeError) as e:
            raise UsageError(f"Unknown algorithm '{algo}'") from e
        # run_chains derives every chain's stream from the seed itself.
        kwargs = {
            name: settings.get(name)
            for name in options
            if name != "seed" and settings.get(name) is not None
        }
        n_chains = int(settings.get("chains", CFG.CLDA_CHAINS))
        _, train, held_out = load_training_corpus(
            corpus, split, use_split=not full_corpus, single_collection=single_collection
        )
        results = run_chains(algo, train, n_chains, seed=settings.get("seed"), **kwargs)
        metadata = {
            "corpus": corpus,
            "split": held_out.fingerprint() if held_out is not None else None,
            "single_collection": bool(single_collection),
            "seed": settings.get("seed"),
        }
        os.makedirs(out, exist_ok=True)
        settings.save(out)
        summary = {"algorithm": algo, "chains": n_chains, "J": train.J, "documents": train.num_documents}
        for index, result in enumerate(results):
            chain = Chain(out) if n_chains == 1 else add_chain(out, index + 1)
            chain_metadata = dict(metadata, chain=index + 1)
            if algo == "vem":
                result.save(chain.directory, chain_metadata)
                summary.setdefault("elbo", []).append(result.history[-1].total)
                summary.setdefault("pi", []).append(result.params.pi_estimate().round(4).tolist())
            else:
                chain.save(result, chain_metadata)
                summary.setdefault("log_joint", []).append(result.log_joint[-1])
                pi = result.posterior_mean_pi()
                if pi is not None:
                    summary.setdefault("pi", []).append(pi.round(4).tolist())
        return summary

    def estimate_hyper(
        self,
        corpus: str,
        k: int,
        out: str,
        model: str = "clda",
        alpha: float = None,
        eta: float = 1.0,
        gamma: float = 1.0,
        samples: int = None,
        thin: int = None,
        burn_in: int = None,
        max_iterations: int = None,
        tolerance: float = None,
        window: int = None,
        replicates: int = 1,
        seed: int = None,
        single_collection: bool = False,
        config: str = None,
    ) -> dict:
        settings = _settings(
            config,
            samples=samples,
            thin=thin,
            burn_in=burn_in,
            max_iterations=max_iterations,
            tolerance=tolerance,
            window=window,
            seed=seed,
        )
        if model == "clda" and alpha is not None:
            settings.merge(alpha=alpha)
        gem_config = settings.section(GibbsEmConfig)
        _, train, _ = load_training_corpus(corpus, use_split=False, single_collection=single_collection)
        if model == "lda":
            initial = {"alpha": 1.0 if alpha is None else alpha, "eta": eta}
        else:
            initial = {"eta": eta, "gamma": gamma}
        trajectories = run_replicates(train, k, gem_config, replicates, model, **initial)
        os.makedirs(out, exist_ok=True)
        trajectories_frame(trajectories).to_csv(
            os.path.join(out, TRAJECTORY_FILE), index=False, lineterminator="\n"
        )
        estimates = [
            dict(
                {"replicate": index, "converged": t.converged, "unsettled_m_steps": t.unsettled_m_steps},
                **t.final,
                tail_average=t.tail_average(),
            )
            for index, t in enumerate(trajectories)
        ]
        _write_json(os.path.join(out, "estimates.json"), {"model": model, "estimates": estimates})
        settings.save(out)
        return {"model": model, "estimates": estimates}

    def compare(
        self,
        method: str,
        corpus: str,
        k: int,
        out: str,
        alpha: float = None,
        gamma: float = None,
        eta: float = None,
        alpha_lda: float = None,
        iterations: int = None,
        burn_in: int = None,
        save_every: int = None,
        seed: int = None,
        config: str = None,
    ) -> dict:
        settings = _settings(
            config,
            alpha=alpha,
            gamma=gamma,
            eta=eta,
            iterations=iterations,
            burn_in=burn_in,
            save_every=save_every,
            seed=seed,
        )
        _, train, _ = load_training_corpus(corpus, use_split=False)
        if method == "m1":
            pi = self._mixtures_clda(train, k, settings)
        elif method == "m2":
            pi = self._mixtures_flat_lda(train, k, settings, alpha_lda)
        elif method == "m3":
            pi = self._mixtures_per_collection_lda(train, k, settings, alpha_lda)
        else:
            raise UsageError(f"Unknown method '{method}', expected m1, m2 or m3")
        summary = {"method": method, "pi": pi.round(4).tolist()}
        truth_path = os.path.join(corpus, TRUTH_FILE)
        if os.path.exists(truth_path):
            truth = load_truth(truth_path)
            summary["aligned_l1"] = aligned_l1(truth.pi, pi).round(6).tolist()
        rows = [
            {"method": method, "collection": j + 1, "topic": t + 1, "pi": float(pi[j, t])}
            for j in range(pi.shape[0])
            for t in range(pi.shape[1])
        ]
        os.makedirs(out, exist_ok=True)
        pd.DataFrame(rows).to_csv(os.path.join(out, MIXTURES_FILE), index=False, lineterminator="\n")
        settings.save(out)
        return summary

    def _mixtures_clda(self, train: Corpus, k, settings):
        backend = Inference(
            "ags",
            k=k,
            **{
                name: settings.get(name)
                for name in ("alpha", "gamma", "eta", "iterations", "burn_in", "save_every", "seed")
                if settings.get(name) is not None
            },
        )
        trace = backend.run(train)
        pi = trace.posterior_mean_pi()
        return trace.final.pi if pi is None else pi

    def _lda_config(self, settings):
        return build(
            LdaConfig,
            iterations=settings.get("iterations"),
            burn_in=settings.get("burn_in"),
            save_every=settings.get("save_every"),
        )

    def _lda_samples(self, corpus: Corpus, k, settings, alpha_lda, rng):
        hyper = self._lda_hyperparameters(settings, alpha_lda)
        trace = cgs_run(corpus, k, hyper.alpha, hyper.eta, self._lda_config(settings), rng=rng)
        return [sample.z for sample in trace.samples] or [trace.final.z], hyper

    def _lda_hyperparameters(self, settings, alpha_lda):
        alpha = alpha_lda if alpha_lda is not None else settings.get("alpha", 0.1)
        return build(Hyperparameters, alpha=alpha, gamma=1.0, eta=settings.get("eta", 0.25))

    def _mixtures_flat_lda(self, train: Corpus, k, settings, alpha_lda):
        """Whole-corpus LDA, mixtures read off the labels of each collection's tokens."""
        rng = make_rng(settings.get("seed"))
        samples, _ = self._lda_samples(train.single_collection(), k, settings, alpha_lda, rng)
        return np.mean([collection_mixture(train, z, k) for z in samples], axis=0)

    def _mixtures_per_collection_lda(self, train: Corpus, k, settings, alpha_lda):
        """Separate LDA per collection; topics aligned to the first collection's."""
        rng = make_rng(settings.get("seed"))
        mixtures, reference = [], None
        for j in range(train.J):
            members = train.documents_in(j)
            part = Corpus.from_documents(
                [train.document(d) for d in members], vocabulary=train.vocabulary
            )
            samples, hyper = self._lda_samples(part, k, settings, alpha_lda, rng)
            beta = np.mean(
                [rao_blackwell_lda(recompute_counts(part, z, k), hyper.alpha, hyper.eta).beta for z in samples],
                axis=0,
            )
            mixture = np.mean([collection_mixture(part, z, k)[0] for z in samples], axis=0)
            if reference is None:
                reference = beta
            else:
                mixture = mixture[align_topics(reference, beta)]
            mixtures.append(mixture)
        return np.vstack(mixtures)
