import os
from spacy.lang.en.stop_words import STOP_WORDS
from Config import Config
from Errors import UsageError

CFG = Config()

BUILTIN_LISTS = {"english": STOP_WORDS, "none": frozenset()}


class Stopwords:
    """Named stopword lists: one-term-per-line files, then the built-in lists."""

    def __init__(self, directory=None):
        self.directory = directory or CFG.CLDA_STOPWORDS_DIRECTORY

    def _path(self, list_name):
        return os.path.join(self.directory, f"{list_name}.txt")

    def get_stopwords(self, list_name):
        if os.path.exists(self._path(list_name)):
            return read_stopword_file(self._path(list_name))
        if list_name in BUILTIN_LISTS:
            return set(BUILTIN_LISTS[list_name])
        raise UsageError(f"Unknown stopword list '{list_name}'")

    def resolve(self, reference):
        """A stopword set from a file path or a list name."""
        if reference is None:
            return set()
        if os.path.isfile(reference):
            return read_stopword_file(reference)
        return self.get_stopwords(reference)


def read_stopword_file(path):
    with open(path, "r", encoding="utf-8") as f:
        return {line.strip().lower() for line in f if line.strip()}
