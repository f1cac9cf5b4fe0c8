#!/usr/bin/env python3
import os
import sys
import json
import shutil
import logging
import argparse
from Commands import Commands
from Config import Config
from Errors import CldaError, UsageError
from Synthetic import get_presets

CFG = Config()
logger = logging.getLogger("clda")


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _flag(value):
    return True if value else None


def build_parser():
    parser = ArgumentParser(prog="clda", description="Compound LDA topic models")
    parser.add_argument("--log-level", default=CFG.CLDA_LOG_LEVEL)
    commands = parser.add_subparsers(dest="command", required=True)

    preprocess = commands.add_parser("preprocess", help="Text folders to a bag-of-words corpus")
    preprocess.add_argument("--input", required=True)
    preprocess.add_argument("--stopwords", default="english")
    preprocess.add_argument("--min-count", type=int, default=1)
    preprocess.add_argument("--min-len", type=int, default=1)
    preprocess.add_argument("--doc-fraction", type=float)
    preprocess.add_argument("--word-fraction", type=float)
    preprocess.add_argument("--seed", type=int)
    preprocess.add_argument("--out", required=True)

    generate = commands.add_parser("generate", help="Simulate a corpus from the generative model")
    source = generate.add_mutually_exclusive_group(required=True)
    source.add_argument("--preset", choices=get_presets(aliases=True))
    source.add_argument("--config")
    generate.add_argument("--seed", type=int)
    generate.add_argument("--doc-fraction", type=float)
    generate.add_argument("--word-fraction", type=float)
    generate.add_argument("--out", required=True)

    train = commands.add_parser("train", help="Fit a model and save its chains")
    train.add_argument("--algo", choices=CFG.get_algorithms() + ["lda-cgs"])
    train.add_argument("--corpus", required=True)
    train.add_argument("--k", type=int)
    train.add_argument("--alpha", type=float)
    train.add_argument("--gamma", type=float)
    train.add_argument("--eta", type=float)
    train.add_argument("--epsilon", type=float)
    train.add_argument("--adapt-epsilon", action="store_true")
    train.add_argument("--iters", dest="iterations", type=int)
    train.add_argument("--burn-in", type=int)
    train.add_argument("--save-every", type=int)
    train.add_argument("--max-iterations", type=int)
    train.add_argument("--tolerance", type=float)
    train.add_argument("--optimize-hyperparameters", action="store_true")
    train.add_argument("--seed", type=int)
    train.add_argument("--chains", type=int)
    train.add_argument("--single-collection", action="store_true")
    train.add_argument("--split")
    train.add_argument("--full-corpus", action="store_true")
    train.add_argument("--config")
    train.add_argument("--out", required=True)

    estimate = commands.add_parser("estimate-hyper", help="Gibbs-EM hyperparameter estimation")
    estimate.add_argument("--corpus", required=True)
    estimate.add_argument("--k", type=int, required=True)
    estimate.add_argument("--model", choices=["clda", "lda"], default="clda")
    estimate.add_argument("--alpha", type=float)
    estimate.add_argument("--eta", type=float, default=1.0)
    estimate.add_argument("--gamma", type=float, default=1.0)
    estimate.add_argument("--samples", type=int)
    estimate.add_argument("--thin", type=int)
    estimate.add_argument("--burn-in", type=int)
    estimate.add_argument("--max-iterations", type=int)
    estimate.add_argument("--tolerance", type=float)
    estimate.add_argument("--window", type=int)
    estimate.add_argument("--replicates", type=int, default=1)
    estimate.add_argument("--seed", type=int)
    estimate.add_argument("--single-collection", action="store_true")
    estimate.add_argument("--config")
    estimate.add_argument("--out", required=True)

    evaluate = commands.add_parser("evaluate", help="Perplexity, coherence, topic sizes and chain mixing")
    evaluate.add_argument("--model", required=True)
    evaluate.add_argument("--corpus")
    evaluate.add_argument("--split")
    evaluate.add_argument("--metrics", default="perplexity,coherence,size")
    evaluate.add_argument("--top-m", type=int)
    evaluate.add_argument("--max-lag", type=int)
    evaluate.add_argument("--region-threshold", type=float)
    evaluate.add_argument("--out", required=True)

    export = commands.add_parser("export", help="Write estimates as CSV")
    export.add_argument("--model", required=True)
    export.add_argument("--what", required=True, choices=["pi", "theta", "beta", "top-words", "topic-dist"])
    export.add_argument("--corpus")
    export.add_argument("--top-m", type=int)
    export.add_argument("--out", required=True)

    compare = commands.add_parser("compare", help="Collection mixtures by cLDA or LDA")
    compare.add_argument("--method", required=True, choices=["m1", "m2", "m3"])
    compare.add_argument("--corpus", required=True)
    compare.add_argument("--k", type=int, required=True)
    compare.add_argument("--alpha", type=float)
    compare.add_argument("--gamma", type=float)
    compare.add_argument("--eta", type=float)
    compare.add_argument("--alpha-lda", type=float)
    compare.add_argument("--iters", dest="iterations", type=int)
    compare.add_argument("--burn-in", type=int)
    compare.add_argument("--save-every", type=int)
    compare.add_argument("--seed", type=int)
    compare.add_argument("--config")
    compare.add_argument("--out", required=True)
    return parser


def main(argv=None):
    created = None
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(
            level=args.log_level.upper(),
            format="%(asctime)s | %(levelname)s | %(name)s | %(message)s",
            stream=sys.stderr,
        )
        values = vars(args)
        command = values.pop("command")
        values.pop("log_level")
        for name in ("adapt_epsilon", "optimize_hyperparameters"):
            if name in values:
                values[name] = _flag(values[name])
        if not os.path.exists(values["out"]):
            created = values["out"]
        summary = Commands().execute_command(command, values)
        print(json.dumps(summary, indent=2, default=str))
        return 0
    except CldaError as e:
        print(f"clda: error: {e}", file=sys.stderr)
        _remove_partial_output(created)
        return e.exit_code
    except Exception as e:
        logger.debug("Unexpected failure", exc_info=True)
        print(f"clda: error: {type(e).__name__}: {e}", file=sys.stderr)
        _remove_partial_output(created)
        return CldaError.exit_code


def _remove_partial_output(created):
    if created is not None and os.path.isdir(created):
        shutil.rmtree(created)


if __name__ == "__main__":
    sys.exit(main())
