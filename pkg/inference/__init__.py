import importlib
import inspect
import logging
from concurrent.futures import ThreadPoolExecutor
from Numerics import spawn_rngs

logger = logging.getLogger(__name__)

ALIASES = {"lda-cgs": "lda_cgs", "cgs": "lda_cgs"}


def _module_name(name):
    name = ALIASES.get(name, name)
    return name.replace("-", "_")


def _class_name(module_name):
    return "".join(part.capitalize() for part in module_name.split("_")) + "Inference"


def get_inference_options(name):
    module_name = _module_name(name)
    module = importlib.import_module(f"inference.{module_name}")
    inference_class = getattr(module, _class_name(module_name))
    signature = inspect.signature(inference_class.__init__)
    options = [
        param for param in signature.parameters if param != "self" and param != "kwargs"
    ]
    return options


class Inference:
    """An inference backend looked up by name (``ags``, ``mgs``, ``vem``, ``lda-cgs``)."""

    def __init__(self, name, **kwargs):
        module_name = _module_name(name)
        try:
            module = importlib.import_module(f".{module_name}", package=__name__)
            inference_class = getattr(module, _class_name(module_name))
        except (ModuleNotFoundError, AttributeError) as e:
            raise AttributeError(f"module {__name__} has no attribute {name}") from e
        self.name = module_name
        self.instance = inference_class(**kwargs)

    def __getattr__(self, attr):
        return getattr(self.instance, attr)


def run_chains(name, corpus, n_chains, seed=None, **kwargs):
    """Run ``n_chains`` independently seeded chains in worker threads.

    Chain i draws from the i-th child of ``SeedSequence(seed)``; results come
    back in chain order.
    """
    rngs = spawn_rngs(seed, n_chains)

    def run_one(index):
        backend = Inference(name, **kwargs)
        logger.info(f"Starting {name} chain {index + 1}/{n_chains}")
        return backend.run(corpus, rng=rngs[index])

    if n_chains == 1:
        return [run_one(0)]
    with ThreadPoolExecutor(max_workers=n_chains) as executor:
        return list(executor.map(run_one, range(n_chains)))
