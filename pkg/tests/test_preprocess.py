import numpy as np
import pytest
from Errors import DataError, EmptyCorpusError, UsageError
from Preprocess import detokenize, preprocess, read_text_collections, tokenize
from Stopwords import Stopwords


def test_basic_vocabulary():
    corpus = preprocess(["the cat sat", "the dog"], stopwords={"the"}, min_count=1, min_len=2)
    assert corpus.num_documents == 2
    assert corpus.vocabulary.terms == ["cat", "dog", "sat"]
    assert detokenize(corpus) == ["cat sat", "dog"]


def test_min_count_empties_corpus():
    with pytest.raises(EmptyCorpusError):
        preprocess(["the cat sat", "the dog"], stopwords={"the"}, min_count=2, min_len=2)


def test_frequency_filter_keeps_frequent_term():
    docs = ["data point", "data set", "data table", "data frame", "data lake"]
    docs += ["alpha", "beta", "gamma", "delta", "epsilon"]
    corpus = preprocess(docs, min_count=2)
    assert corpus.vocabulary.terms == ["data"]
    assert corpus.num_documents == 5


def test_tokenizer_drops_punctuation_and_lowercases():
    assert tokenize("Hello, World! (again)") == ["hello", "world", "again"]


def test_numbers_are_dropped():
    corpus = preprocess(["price 42 dollars 3.5"], min_count=1)
    assert corpus.vocabulary.terms == ["dollars", "price"]


def test_collection_emptied_by_filtering():
    with pytest.raises(EmptyCorpusError):
        preprocess(["cat cat", "the"], stopwords={"the"}, labels=[0, 1])


def test_label_count_must_match():
    with pytest.raises(UsageError):
        preprocess(["a b"], labels=[0, 1])


def test_read_text_collections(tmp_path):
    for name, texts in {"early": ["one two", "two three"], "late": ["three four"]}.items():
        folder = tmp_path / name
        folder.mkdir()
        for i, text in enumerate(texts):
            (folder / f"{i}.txt").write_text(text)
    raw, labels, names = read_text_collections(str(tmp_path))
    assert names == ["early", "late"]
    assert labels == [0, 0, 1]
    corpus = preprocess(raw, labels=labels)
    assert corpus.J == 2


def test_read_text_collections_flat_and_missing(tmp_path):
    (tmp_path / "a.txt").write_text("hello there")
    raw, labels, _ = read_text_collections(str(tmp_path))
    assert raw == ["hello there"] and labels == [0]
    with pytest.raises(DataError):
        read_text_collections(str(tmp_path / "missing"))


def test_contractions_and_abbreviations_split_on_punctuation():
    assert tokenize("Don't stop, we won't!") == ["don", "t", "stop", "we", "won", "t"]
    assert tokenize("The U.S. e-mail") == ["the", "u", "s", "e", "mail"]
    assert tokenize("under_score") == ["under_score"]


IDEMPOTENCY_TEXTS = [
    ["Don't panic: the U.S. won't wait.", "He said \"no\" -- zebra!", "e-mail & co.'s rules"],
    ["Rock'n'roll (1955) rocks.", "3.14 is pi; 42 isn't zebra.", "Mr. O'Neil's cat"],
]


def random_texts(seed, count=12):
    rng = np.random.default_rng(seed)
    alphabet = list("abcdeABCDE") * 3 + list(" .,'-!?:;()\"/0123") + [" "] * 6
    return ["".join(rng.choice(alphabet, size=60)) + " abc" for _ in range(count)]


@pytest.mark.parametrize(
    "raw", IDEMPOTENCY_TEXTS + [random_texts(seed) for seed in range(5)]
)
def test_preprocessing_its_own_output_changes_nothing(raw):
    labels = [i % 2 for i in range(len(raw))]
    english = Stopwords().get_stopwords("english")
    corpus = preprocess(raw, stopwords=english, labels=labels)
    again = preprocess(detokenize(corpus), stopwords=english, labels=list(corpus.collection_of))
    assert again == corpus


def test_stopword_lists(tmp_path):
    lists = Stopwords(str(tmp_path))
    assert "the" in lists.get_stopwords("english")
    assert lists.get_stopwords("none") == set()
    (tmp_path / "custom.txt").write_text("Foo\nbar\n \n")
    assert lists.get_stopwords("custom") == {"foo", "bar"}
    assert lists.resolve("custom") == {"foo", "bar"}
    assert lists.resolve(str(tmp_path / "custom.txt")) == {"foo", "bar"}
    assert lists.resolve(None) == set()
    with pytest.raises(UsageError):
        lists.get_stopwords("missing")
