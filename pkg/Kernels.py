"""Compiled token sweeps shared by the collapsed Gibbs samplers.

Uniform variates are drawn by the caller from its numpy Generator and passed
in, so a sweep is a deterministic function of its inputs and the chain stays
reproducible under a seed.
"""
import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def gibbs_sweep(words, docs, z, n_dk, m_kv, m_k, doc_prior, eta, uniforms):
    """Resample every token label in position order.

    The weight of topic k for token i in document d with term v is
    (doc_prior[d, k] + n_dk) * (eta + m_kv) / (V * eta + m_k), all counts
    excluding the token itself. The document-length denominator is constant
    in k and omitted.
    """
    K = m_k.shape[0]
    v_eta = m_kv.shape[1] * eta
    cumulative = np.empty(K)
    for i in range(words.shape[0]):
        v = words[i]
        d = docs[i]
        k = z[i]
        n_dk[d, k] -= 1
        m_kv[k, v] -= 1
        m_k[k] -= 1
        total = 0.0
        for t in range(K):
            total += (doc_prior[d, t] + n_dk[d, t]) * (eta + m_kv[t, v]) / (v_eta + m_k[t])
            cumulative[t] = total
        u = uniforms[i] * total
        k = 0
        while k < K - 1 and cumulative[k] <= u:
            k += 1
        z[i] = k
        n_dk[d, k] += 1
        m_kv[k, v] += 1
        m_k[k] += 1


@njit(cache=True, nogil=True)
def antoniak_tables(n_dk, concentration, uniforms):
    """Table counts s_dk = sum_{l=1..n_dk} [u_l < c_dk / (c_dk + l - 1)].

    ``uniforms`` holds at least n_dk.sum() variates, consumed in row-major
    order of (d, k) and then by l.
    """
    D, K = n_dk.shape
    s = np.zeros((D, K), dtype=np.int64)
    position = 0
    for d in range(D):
        for k in range(K):
            c = concentration[d, k]
            tables = 0
            for l in range(n_dk[d, k]):
                if uniforms[position] * (c + l) < c:
                    tables += 1
                position += 1
            s[d, k] = tables
    return s
