import numpy as np
from scipy import special
from Errors import NumericsDomainError

SIMPLEX_ATOL = 1e-12

# Smallest positive value a Dirichlet component may take; Gamma draws with tiny
# shape parameters underflow to exactly zero otherwise.
TINY = np.finfo(np.float64).tiny


def _check_positive(x, name):
    x = np.asarray(x, dtype=np.float64)
    if not np.all(x > 0):
        raise NumericsDomainError(f"{name} is only defined for x > 0")
    return x


def _as_output(value, x):
    if np.ndim(x) == 0:
        return float(value)
    return value


def digamma(x):
    x = _check_positive(x, "digamma")
    return _as_output(special.digamma(x), x)


def trigamma(x):
    x = _check_positive(x, "trigamma")
    return _as_output(special.polygamma(1, x), x)


def tetragamma(x):
    x = _check_positive(x, "tetragamma")
    return _as_output(special.polygamma(2, x), x)


def gammaln(x):
    x = _check_positive(x, "gammaln")
    return _as_output(special.gammaln(x), x)


def make_rng(seed=None):
    """A PCG64 generator; the same seed always yields the same stream."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def spawn_rngs(seed, n):
    """Independent sub-streams (one per chain or replicate) derived from one seed."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [np.random.Generator(np.random.PCG64(child)) for child in children]


def rng_state(rng):
    return rng.bit_generator.state


def restore_rng(state):
    bit_generator = np.random.PCG64()
    bit_generator.state = state
    return np.random.Generator(bit_generator)


def to_simplex(values):
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0 or np.any(values < 0) or not np.all(np.isfinite(values)):
        raise NumericsDomainError("simplex entries must be finite and non-negative")
    total = values.sum(axis=-1, keepdims=True)
    if np.any(total <= 0):
        raise NumericsDomainError("simplex entries must not all be zero")
    return values / total


def is_simplex(values, atol=SIMPLEX_ATOL):
    values = np.asarray(values, dtype=np.float64)
    return bool(
        np.all(values >= 0) and np.allclose(values.sum(axis=-1), 1.0, rtol=0, atol=atol)
    )


def sample_dirichlet(rng, params):
    """Draw Dir(params) by normalizing independent Gamma(params_i, 1) draws.

    ``params`` may be a vector or a matrix; each row of a matrix is an
    independent Dirichlet.
    """
    params = np.asarray(params, dtype=np.float64)
    if params.size == 0 or not np.all(params > 0) or not np.all(np.isfinite(params)):
        raise NumericsDomainError("Dirichlet parameters must be finite and > 0")
    if params.shape[-1] == 1:
        return np.ones_like(params)
    draws = rng.standard_gamma(params)
    draws = np.maximum(draws, TINY)
    return draws / draws.sum(axis=-1, keepdims=True)


def sample_categorical(rng, weights):
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 1 or weights.size == 0:
        raise NumericsDomainError("categorical weights must be a non-empty vector")
    if np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise NumericsDomainError("categorical weights must be finite and >= 0")
    cumulative = np.cumsum(weights)
    total = cumulative[-1]
    if total <= 0:
        raise NumericsDomainError("categorical weights must not all be zero")
    u = rng.random() * total
    index = int(np.searchsorted(cumulative, u, side="right"))
    return min(index, weights.size - 1)


def normalize_log_weights(log_weights, axis=-1):
    """Exponentiate and normalize log weights along ``axis`` without overflow."""
    log_weights = np.asarray(log_weights, dtype=np.float64)
    return np.exp(log_weights - special.logsumexp(log_weights, axis=axis, keepdims=True))


def dirichlet_expectation(params):
    """E[log x] under Dir(params), row-wise."""
    params = np.asarray(params, dtype=np.float64)
    if params.ndim == 1:
        return special.psi(params) - special.psi(params.sum())
    return special.psi(params) - special.psi(params.sum(axis=-1, keepdims=True))
