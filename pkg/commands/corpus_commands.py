import os
import json
import logging
from Commands import Commands
from Config import Config
from Config.Run import SynthConfig, build, read_settings_file
from Corpus import SPLIT_FILE, save_corpus, split_held_out
from Numerics import make_rng
from Preprocess import preprocess, read_text_collections
from Stopwords import Stopwords
from Synthetic import generate, load_preset, save_truth

CFG = Config()
logger = logging.getLogger(__name__)

COLLECTIONS_FILE = "collections.json"


def write_split(corpus, out, seed, doc_fraction=None, word_fraction=None):
    split = split_held_out(
        make_rng(seed),
        corpus,
        doc_fraction or CFG.CLDA_DOC_FRACTION,
        word_fraction or CFG.CLDA_WORD_FRACTION,
    )
    split.save(os.path.join(out, SPLIT_FILE))
    return split


class corpus_commands(Commands):
    def __init__(self):
        self.commands = {
            "preprocess": self.preprocess_corpus,
            "generate": self.generate_corpus,
        }

    def preprocess_corpus(
        self,
        input: str,
        out: str,
        stopwords: str = "english",
        min_count: int = 1,
        min_len: int = 1,
        seed: int = None,
        doc_fraction: float = None,
        word_fraction: float = None,
    ) -> dict:
        raw_docs, labels, names = read_text_collections(input)
        corpus = preprocess(
            raw_docs,
            Stopwords().resolve(stopwords),
            min_count=min_count,
            min_len=min_len,
            labels=labels,
        )
        save_corpus(corpus, out)
        with open(os.path.join(out, COLLECTIONS_FILE), "w", encoding="utf-8", newline="\n") as f:
            json.dump({"collections": names}, f, indent=2)
            f.write("\n")
        seed = CFG.CLDA_SEED if seed is None else seed
        split = write_split(corpus, out, seed, doc_fraction, word_fraction)
        return {
            "documents": corpus.num_documents,
            "collections": corpus.J,
            "vocabulary": corpus.V,
            "tokens": corpus.num_tokens,
            "held_out_documents": len(split.held_out_documents),
        }

    def generate_corpus(
        self,
        out: str,
        preset: str = None,
        config: str = None,
        seed: int = None,
        doc_fraction: float = None,
        word_fraction: float = None,
    ) -> dict:
        if preset is not None:
            synth = load_preset(preset)
            if seed is not None:
                synth = synth.model_copy(update={"seed": seed})
        else:
            values = read_settings_file(config) if config else {}
            values = values.get("synthetic", values)
            if seed is not None:
                values["seed"] = seed
            synth = build(SynthConfig, **values)
        if synth.seed is None:
            synth = synth.model_copy(update={"seed": CFG.CLDA_SEED})
        corpus, truth = generate(synth)
        save_corpus(corpus, out)
        save_truth(truth, out)
        with open(os.path.join(out, "synth.json"), "w", encoding="utf-8", newline="\n") as f:
            json.dump(synth.model_dump(), f, indent=2)
            f.write("\n")
        split = write_split(corpus, out, synth.seed, doc_fraction, word_fraction)
        return {
            "documents": corpus.num_documents,
            "collections": corpus.J,
            "vocabulary": corpus.V,
            "tokens": corpus.num_tokens,
            "held_out_documents": len(split.held_out_documents),
            "pi": truth.pi.round(4).tolist(),
        }
