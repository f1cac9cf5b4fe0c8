import os
import json
import math
import hashlib
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence
import numpy as np
import jsonschema
from Errors import CorpusFormatError, DataError, UsageError

logger = logging.getLogger(__name__)

BOW_FILE = "corpus.bow"
LABELS_FILE = "corpus.labels"
VOCAB_FILE = "corpus.vocab"
SPLIT_FILE = "split.json"

SPLIT_SCHEMA = {
    "type": "object",
    "required": ["num_documents", "held_out"],
    "properties": {
        "num_documents": {"type": "integer", "minimum": 1},
        "doc_fraction": {"type": "number"},
        "word_fraction": {"type": "number"},
        "held_out": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["document", "test"],
                "properties": {
                    "document": {"type": "integer", "minimum": 0},
                    "test": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                },
            },
        },
    },
}


class Vocabulary:
    def __init__(self, terms: Sequence[str]):
        self.terms = list(terms)
        self.index = {}
        for position, term in enumerate(self.terms):
            if term in self.index:
                raise DataError(f"Duplicate vocabulary term '{term}'")
            self.index[term] = position

    @classmethod
    def anonymous(cls, size):
        return cls([f"w{v}" for v in range(size)])

    @property
    def size(self):
        return len(self.terms)

    def __len__(self):
        return len(self.terms)

    def __getitem__(self, word_id):
        return self.terms[word_id]

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.terms == other.terms

    def id_of(self, term):
        return self.index[term]


@dataclass(eq=False)
class Corpus:
    """Documents stored as one flat token array with per-document offsets.

    ``collection_of`` holds 0-based collection indices; the 1-based labels
    only exist in ``.labels`` files.
    """

    words: np.ndarray
    offsets: np.ndarray
    collection_of: np.ndarray
    vocabulary: Vocabulary
    J: int
    docs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.words = np.ascontiguousarray(self.words, dtype=np.int64)
        self.offsets = np.ascontiguousarray(self.offsets, dtype=np.int64)
        self.collection_of = np.ascontiguousarray(self.collection_of, dtype=np.int64)
        lengths = np.diff(self.offsets)
        if self.num_documents == 0:
            raise DataError("Corpus has no documents")
        if np.any(lengths < 1):
            empty = int(np.flatnonzero(lengths < 1)[0])
            raise DataError(f"Document {empty} has no words")
        if self.words.size and (self.words.min() < 0 or self.words.max() >= self.V):
            raise DataError(f"Word id outside vocabulary of size {self.V}")
        if self.collection_of.shape[0] != self.num_documents:
            raise DataError("Collection labels do not match the number of documents")
        if self.collection_of.min() < 0 or self.collection_of.max() >= self.J:
            raise DataError(f"Collection index outside [0, {self.J})")
        sizes = np.bincount(self.collection_of, minlength=self.J)
        if np.any(sizes == 0):
            missing = int(np.flatnonzero(sizes == 0)[0]) + 1
            raise DataError(f"Collection {missing} has no documents")
        self.docs = np.repeat(np.arange(self.num_documents), lengths)

    @classmethod
    def from_documents(cls, documents, collection_of=None, vocabulary=None, J=None):
        documents = [np.asarray(doc, dtype=np.int64) for doc in documents]
        lengths = [len(doc) for doc in documents]
        offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
        words = np.concatenate(documents) if documents else np.zeros(0, dtype=np.int64)
        if collection_of is None:
            collection_of = np.zeros(len(documents), dtype=np.int64)
        collection_of = np.asarray(collection_of, dtype=np.int64)
        if J is None:
            J = int(collection_of.max()) + 1 if collection_of.size else 1
        if vocabulary is None:
            vocabulary = Vocabulary.anonymous(int(words.max()) + 1 if words.size else 1)
        return cls(words, offsets, collection_of, vocabulary, J)

    @property
    def V(self):
        return self.vocabulary.size

    @property
    def num_documents(self):
        return self.offsets.shape[0] - 1

    @property
    def num_tokens(self):
        return int(self.words.shape[0])

    @property
    def lengths(self):
        return np.diff(self.offsets)

    @property
    def documents(self) -> List[np.ndarray]:
        return [self.document(d) for d in range(self.num_documents)]

    def document(self, d):
        return self.words[self.offsets[d] : self.offsets[d + 1]]

    def documents_in(self, j):
        return np.flatnonzero(self.collection_of == j)

    def collection_sizes(self):
        return np.bincount(self.collection_of, minlength=self.J)

    def term_counts(self):
        return np.bincount(self.words, minlength=self.V)

    def single_collection(self):
        """The same documents with every collection merged into one."""
        return Corpus(
            self.words.copy(),
            self.offsets.copy(),
            np.zeros_like(self.collection_of),
            self.vocabulary,
            1,
        )

    def subset(self, documents):
        """A corpus made of the listed documents, keeping their collections."""
        documents = np.asarray(documents, dtype=np.int64)
        return Corpus.from_documents(
            [self.document(d) for d in documents],
            self.collection_of[documents],
            self.vocabulary,
            self.J,
        )

    def canonical(self):
        """Documents with tokens in ascending id order (the on-disk order)."""
        return [np.sort(doc) for doc in self.documents]

    def __eq__(self, other):
        if not isinstance(other, Corpus):
            return NotImplemented
        if (
            self.J != other.J
            or self.vocabulary != other.vocabulary
            or not np.array_equal(self.offsets, other.offsets)
            or not np.array_equal(self.collection_of, other.collection_of)
        ):
            return False
        return all(
            np.array_equal(a, b) for a, b in zip(self.canonical(), other.canonical())
        )


def _parse_bow_line(line, path, line_number):
    fields = line.split()
    if not fields:
        raise CorpusFormatError("empty document line", path, line_number)
    try:
        num_unique = int(fields[0])
    except ValueError as e:
        raise CorpusFormatError(
            f"expected unique term count, got '{fields[0]}'", path, line_number
        ) from e
    pairs = fields[1:]
    if num_unique != len(pairs):
        raise CorpusFormatError(
            f"declared {num_unique} unique terms but found {len(pairs)}",
            path,
            line_number,
        )
    counts = {}
    for pair in pairs:
        try:
            word_id, count = pair.split(":")
            word_id, count = int(word_id), int(count)
        except ValueError as e:
            raise CorpusFormatError(f"malformed pair '{pair}'", path, line_number) from e
        if word_id < 0 or count < 1:
            raise CorpusFormatError(f"invalid pair '{pair}'", path, line_number)
        if word_id in counts:
            raise CorpusFormatError(f"repeated term id {word_id}", path, line_number)
        counts[word_id] = count
    ids = sorted(counts)
    return np.repeat(np.asarray(ids, dtype=np.int64), [counts[v] for v in ids])


def read_bow(bow_path):
    documents = []
    with open(bow_path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            documents.append(_parse_bow_line(line, bow_path, line_number))
    return documents


def read_labels(labels_path, J=None):
    labels = []
    with open(labels_path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                label = int(text)
            except ValueError as e:
                raise CorpusFormatError(
                    f"label '{text}' is not an integer", labels_path, line_number
                ) from e
            if label < 1 or (J is not None and label > J):
                bound = f"1..{J}" if J is not None else ">= 1"
                raise CorpusFormatError(
                    f"label {label} outside {bound}", labels_path, line_number
                )
            labels.append(label - 1)
    return np.asarray(labels, dtype=np.int64)


def read_vocab(vocab_path):
    with open(vocab_path, "r", encoding="utf-8") as f:
        return Vocabulary([line.rstrip("\n") for line in f if line.rstrip("\n")])


def load_corpus(bow_path, labels_path=None, vocab_path=None, J=None) -> Corpus:
    documents = read_bow(bow_path)
    if not documents:
        raise CorpusFormatError("no documents", bow_path)
    if labels_path is not None and os.path.exists(labels_path):
        labels = read_labels(labels_path, J)
        if labels.shape[0] != len(documents):
            raise CorpusFormatError(
                f"{labels.shape[0]} labels for {len(documents)} documents", labels_path
            )
    else:
        labels = np.zeros(len(documents), dtype=np.int64)
    max_id = max(int(doc.max()) for doc in documents)
    if vocab_path is not None and os.path.exists(vocab_path):
        vocabulary = read_vocab(vocab_path)
        if max_id >= vocabulary.size:
            for line_number, doc in enumerate(documents, start=1):
                if doc.max() >= vocabulary.size:
                    raise CorpusFormatError(
                        f"word id {int(doc.max())} >= V={vocabulary.size}",
                        bow_path,
                        line_number,
                    )
    else:
        vocabulary = Vocabulary.anonymous(max_id + 1)
    if J is None:
        J = int(labels.max()) + 1
    corpus = Corpus.from_documents(documents, labels, vocabulary, J)
    logger.info(
        f"Loaded {corpus.num_documents} documents, {corpus.num_tokens} tokens, "
        f"V={corpus.V}, J={corpus.J} from {bow_path}"
    )
    return corpus


def load_corpus_dir(directory, J=None) -> Corpus:
    bow_path = os.path.join(directory, BOW_FILE)
    if not os.path.exists(bow_path):
        raise DataError(f"No {BOW_FILE} in {directory}")
    return load_corpus(
        bow_path,
        os.path.join(directory, LABELS_FILE),
        os.path.join(directory, VOCAB_FILE),
        J,
    )


def save_corpus(corpus: Corpus, directory):
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, BOW_FILE), "w", encoding="utf-8", newline="\n") as f:
        for doc in corpus.documents:
            ids, counts = np.unique(doc, return_counts=True)
            pairs = " ".join(f"{v}:{c}" for v, c in zip(ids, counts))
            f.write(f"{len(ids)} {pairs}\n")
    with open(
        os.path.join(directory, LABELS_FILE), "w", encoding="utf-8", newline="\n"
    ) as f:
        for j in corpus.collection_of:
            f.write(f"{int(j) + 1}\n")
    with open(os.path.join(directory, VOCAB_FILE), "w", encoding="utf-8", newline="\n") as f:
        for term in corpus.vocabulary.terms:
            f.write(f"{term}\n")


@dataclass
class HeldOutSplit:
    """Held-out documents and, for each, the token positions kept for testing.

    Positions index into the document as stored in the corpus; every other
    position of a held-out document is a training word.
    """

    num_documents: int
    test_positions: dict
    doc_fraction: Optional[float] = None
    word_fraction: Optional[float] = None

    @property
    def held_out_documents(self):
        return sorted(self.test_positions)

    def is_held_out(self, d):
        return d in self.test_positions

    def train_positions(self, d, length):
        test = self.test_positions.get(d)
        if test is None:
            return np.arange(length)
        mask = np.ones(length, dtype=bool)
        mask[test] = False
        return np.flatnonzero(mask)

    def training_documents(self):
        return [d for d in range(self.num_documents) if d not in self.test_positions]

    def _check(self, corpus: Corpus):
        if corpus.num_documents != self.num_documents:
            raise UsageError(
                f"Split covers {self.num_documents} documents but the corpus has "
                f"{corpus.num_documents}"
            )

    def training_corpus(self, corpus: Corpus) -> Corpus:
        """The corpus with test words removed from held-out documents."""
        self._check(corpus)
        documents = []
        for d in range(corpus.num_documents):
            doc = corpus.document(d)
            documents.append(doc[self.train_positions(d, doc.shape[0])])
        return Corpus.from_documents(
            documents, corpus.collection_of, corpus.vocabulary, corpus.J
        )

    def test_words(self, corpus: Corpus):
        """(document index, word id) arrays over all test tokens."""
        self._check(corpus)
        docs, words = [], []
        for d in self.held_out_documents:
            doc = corpus.document(d)
            positions = np.asarray(self.test_positions[d], dtype=np.int64)
            docs.append(np.full(positions.shape[0], d, dtype=np.int64))
            words.append(doc[positions])
        if not docs:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        return np.concatenate(docs), np.concatenate(words)

    def to_dict(self):
        return {
            "num_documents": self.num_documents,
            "doc_fraction": self.doc_fraction,
            "word_fraction": self.word_fraction,
            "held_out": [
                {"document": int(d), "test": [int(i) for i in self.test_positions[d]]}
                for d in self.held_out_documents
            ],
        }

    def fingerprint(self):
        payload = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()[:16]

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")

    @classmethod
    def load(cls, path):
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
            jsonschema.validate(data, SPLIT_SCHEMA)
        except (OSError, json.JSONDecodeError, jsonschema.ValidationError) as e:
            raise DataError(f"Invalid split file {path}: {e}") from e
        test_positions = {
            int(item["document"]): np.asarray(sorted(item["test"]), dtype=np.int64)
            for item in data["held_out"]
        }
        return cls(
            data["num_documents"],
            test_positions,
            data.get("doc_fraction"),
            data.get("word_fraction"),
        )


def split_held_out(rng, corpus: Corpus, doc_fraction=0.2, word_fraction=0.5) -> HeldOutSplit:
    """Stratified held-out split.

    In each collection ``ceil(doc_fraction * D_j)`` documents are held out,
    drawn uniformly among documents with at least two words. Each held-out
    document keeps ``ceil(word_fraction * n)`` randomly chosen positions for
    testing, capped so that one training word always remains.
    """
    if not 0 < doc_fraction < 1 or not 0 < word_fraction < 1:
        raise UsageError("doc_fraction and word_fraction must lie in (0, 1)")
    lengths = corpus.lengths
    test_positions = {}
    for j in range(corpus.J):
        members = corpus.documents_in(j)
        num_held_out = int(math.ceil(doc_fraction * members.shape[0] - 1e-9))
        if num_held_out >= members.shape[0]:
            raise DataError(f"Collection {j + 1} would lose all of its training documents")
        eligible = members[lengths[members] >= 2]
        if num_held_out > eligible.shape[0]:
            raise UsageError(
                f"Collection {j + 1} has only {eligible.shape[0]} documents long enough to hold out"
            )
        chosen = np.sort(rng.choice(eligible, size=num_held_out, replace=False))
        for d in chosen:
            n = int(lengths[d])
            num_test = min(int(math.ceil(word_fraction * n)), n - 1)
            positions = rng.choice(n, size=num_test, replace=False)
            test_positions[int(d)] = np.sort(positions).astype(np.int64)
    logger.info(
        f"Held out {len(test_positions)} of {corpus.num_documents} documents "
        f"(doc_fraction={doc_fraction}, word_fraction={word_fraction})"
    )
    return HeldOutSplit(corpus.num_documents, test_positions, doc_fraction, word_fraction)


def load_training_corpus(directory, split_path=None, use_split=True, single_collection=False):
    """(full corpus, training corpus, split or None) for a corpus directory.

    The split defaults to the directory's split.json when one exists.
    """
    corpus = load_corpus_dir(directory)
    if split_path is None and use_split:
        default = os.path.join(directory, SPLIT_FILE)
        split_path = default if os.path.exists(default) else None
    split = HeldOutSplit.load(split_path) if split_path else None
    train = split.training_corpus(corpus) if split is not None else corpus
    if single_collection:
        corpus, train = corpus.single_collection(), train.single_collection()
    return corpus, train, split
