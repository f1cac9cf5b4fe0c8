import os
import re
import logging
from collections import Counter
import numpy as np
import spacy
from spacy.tokenizer import Tokenizer
from spacy.util import compile_infix_regex, compile_prefix_regex, compile_suffix_regex
from Corpus import Corpus, Vocabulary
from Errors import DataError, EmptyCorpusError, UsageError

logger = logging.getLogger(__name__)

PUNCTUATION = r"[^\w\s]"
WORD_CHARACTER = re.compile(r"\w")
NUMERIC = re.compile(r"\d+")


def build_tokenizer():
    """A spaCy tokenizer splitting on whitespace and on every punctuation character.

    No exception rules, so contractions and abbreviations are split like any
    other text and a term never contains punctuation.
    """
    nlp = spacy.blank("en")
    return Tokenizer(
        nlp.vocab,
        rules={},
        prefix_search=compile_prefix_regex([PUNCTUATION]).search,
        suffix_search=compile_suffix_regex([PUNCTUATION]).search,
        infix_finditer=compile_infix_regex([PUNCTUATION]).finditer,
    )


tokenizer = build_tokenizer()


def tokenize(text):
    tokens = []
    for token in tokenizer(text):
        if WORD_CHARACTER.search(token.text):
            tokens.append(token.lower_)
    return tokens


def preprocess(raw_docs, stopwords=frozenset(), min_count=1, min_len=1, labels=None):
    """Tokenize and filter raw documents into a Corpus.

    Tokens are lowercased. Stopwords, tokens shorter than ``min_len``, purely
    numeric tokens and terms with corpus frequency below ``min_count`` are
    dropped, then empty documents are removed along with their labels. The
    vocabulary is sorted so term ids do not depend on document order.
    """
    if not raw_docs:
        raise UsageError("No documents to preprocess")
    if labels is None:
        labels = [0] * len(raw_docs)
    if len(labels) != len(raw_docs):
        raise UsageError(f"{len(labels)} labels for {len(raw_docs)} documents")
    stopwords = {word.lower() for word in stopwords}
    tokenized = []
    for text in raw_docs:
        tokens = [
            t
            for t in tokenize(text)
            if t not in stopwords and len(t) >= min_len and not NUMERIC.fullmatch(t)
        ]
        tokenized.append(tokens)
    frequency = Counter(t for tokens in tokenized for t in tokens)
    keep = {term for term, count in frequency.items() if count >= min_count}
    if not keep:
        raise EmptyCorpusError("Corpus is empty after filtering")
    vocabulary = Vocabulary(sorted(keep))
    documents, kept_labels = [], []
    for tokens, label in zip(tokenized, labels):
        ids = [vocabulary.id_of(t) for t in tokens if t in keep]
        if ids:
            documents.append(np.asarray(ids, dtype=np.int64))
            kept_labels.append(label)
    J = max(labels) + 1
    dropped = len(raw_docs) - len(documents)
    if dropped:
        logger.info(f"Removed {dropped} documents left empty by filtering")
    try:
        corpus = Corpus.from_documents(documents, kept_labels, vocabulary, J)
    except DataError as e:
        raise EmptyCorpusError(f"Filtering emptied a collection: {e}") from e
    logger.info(
        f"Preprocessed {corpus.num_documents} documents, V={corpus.V}, "
        f"{corpus.num_tokens} tokens"
    )
    return corpus


def detokenize(corpus: Corpus):
    """Documents as space-joined terms, in stored token order."""
    terms = corpus.vocabulary.terms
    return [" ".join(terms[v] for v in doc) for doc in corpus.documents]


def read_text_collections(input_dir):
    """Raw documents from a directory tree.

    Sub-directories are collections (sorted by name) holding one ``.txt`` file
    per document; a directory of plain ``.txt`` files is a single collection.
    """
    if not os.path.isdir(input_dir):
        raise DataError(f"Input directory {input_dir} does not exist")
    collections = sorted(
        entry
        for entry in os.listdir(input_dir)
        if os.path.isdir(os.path.join(input_dir, entry))
    )
    if not collections:
        collections = ["."]
    raw_docs, labels = [], []
    for j, name in enumerate(collections):
        folder = os.path.join(input_dir, name)
        for file in sorted(os.listdir(folder)):
            if not file.endswith(".txt"):
                continue
            with open(os.path.join(folder, file), "r", encoding="utf-8") as f:
                raw_docs.append(f.read())
            labels.append(j)
    if not raw_docs:
        raise DataError(f"No .txt documents found under {input_dir}")
    names = [os.path.basename(os.path.abspath(input_dir)) if c == "." else c for c in collections]
    return raw_docs, labels, names
