"""Exception hierarchy shared by the library and the command line.

Each class carries the process exit code the CLI uses when it escapes a
command; library callers can simply catch ``CldaError``.
"""


class CldaError(Exception):
    exit_code = 1


class UsageError(CldaError, ValueError):
    """Bad flags, bad config values or inconsistent inputs."""

    exit_code = 2


class DataError(CldaError):
    """Corpus, label, split or model files that cannot be used."""

    exit_code = 3


class CorpusFormatError(DataError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location = f"{path}"
            if line is not None:
                location += f":{line}"
            location += ": "
        super().__init__(f"{location}{message}")


class EmptyCorpusError(DataError):
    pass


class NumericError(CldaError, ArithmeticError):
    """Non-finite values or failed numerical procedures."""

    exit_code = 4


class NumericsDomainError(NumericError, ValueError):
    """An argument lies outside the domain of a special function or sampler."""


class DegenerateInputError(NumericError):
    """Inputs for which an estimator is 0/0 or otherwise undefined."""
