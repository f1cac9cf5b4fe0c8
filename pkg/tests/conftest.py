import numpy as np
import pytest
from Config.Run import Hyperparameters, SynthConfig
from Corpus import Corpus, Vocabulary
from Numerics import make_rng
from Synthetic import generate


@pytest.fixture
def rng():
    return make_rng(1983)


@pytest.fixture
def hyper():
    return Hyperparameters(alpha=0.5, gamma=1.0, eta=0.25)


@pytest.fixture
def tiny_corpus():
    """Two collections, five documents, V=4."""
    return Corpus.from_documents(
        [[0, 0, 1], [1, 2], [2, 3, 3, 0], [3], [0, 2, 2]],
        collection_of=[0, 0, 1, 1, 1],
        vocabulary=Vocabulary(["apple", "banana", "cherry", "date"]),
        J=2,
    )


@pytest.fixture
def small_synthetic():
    config = SynthConfig(
        J=2,
        K=3,
        V=20,
        docs_per_collection=15,
        words_per_document=30,
        alpha=0.5,
        gamma=1.0,
        eta=0.25,
        seed=7,
    )
    return generate(config)


@pytest.fixture
def separated_synthetic():
    """Well separated topics and mixtures for recovery checks."""
    K, V = 3, 30
    beta = np.full((K, V), 1e-3)
    for k in range(K):
        beta[k, k * 10 : (k + 1) * 10] = 1.0
    config = SynthConfig(
        J=2,
        K=K,
        V=V,
        docs_per_collection=40,
        words_per_document=50,
        alpha=0.1,
        gamma=1.0,
        eta=0.25,
        seed=11,
        beta=beta.tolist(),
        pi=[[0.7, 0.2, 0.1], [0.1, 0.3, 0.6]],
    )
    return generate(config)
