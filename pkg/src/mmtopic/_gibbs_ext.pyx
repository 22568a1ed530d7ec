# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled collapsed-Gibbs kernels.

Mirrors ``_gibbs_py`` operation for operation; both consume the same
pre-drawn uniforms so a given seed yields identical assignments.
"""
from libc.stdint cimport int64_t


cdef inline Py_ssize_t _draw(double[::1] cum, Py_ssize_t K, double u) noexcept nogil:
    cdef double target = u * cum[K - 1]
    cdef Py_ssize_t k
    for k in range(K):
        if target < cum[k]:
            return k
    # u * total rounded up to total: take the last category with mass
    k = K - 1
    while k > 0 and cum[k] == cum[k - 1]:
        k -= 1
    return k


def sweep(int64_t[::1] z,
          const int64_t[::1] tok_doc,
          const int64_t[::1] tok_mod,
          const int64_t[::1] tok_word,
          int64_t[:, ::1] n_doc,
          int64_t[:, ::1] n_feat,
          int64_t[:, ::1] n_cat,
          double alpha,
          const double[::1] beta,
          const double[::1] wbeta,
          const double[:, ::1] bias,
          bint use_bias,
          const double[::1] uniforms,
          double[::1] cum):
    cdef Py_ssize_t n = z.shape[0]
    cdef Py_ssize_t K = n_doc.shape[1]
    cdef Py_ssize_t t, k, j, m, w, old, new
    cdef double p, total, b, wb
    cdef Py_ssize_t changed = 0
    with nogil:
        for t in range(n):
            j = tok_doc[t]
            m = tok_mod[t]
            w = tok_word[t]
            old = z[t]
            n_doc[j, old] -= 1
            n_feat[w, old] -= 1
            n_cat[m, old] -= 1
            b = beta[m]
            wb = wbeta[m]
            total = 0.0
            for k in range(K):
                p = (n_doc[j, k] + alpha) * (n_feat[w, k] + b) / (n_cat[m, k] + wb)
                if use_bias:
                    p = p * bias[j, k]
                total = total + p
                cum[k] = total
            new = _draw(cum, K, uniforms[t])
            z[t] = new
            n_doc[j, new] += 1
            n_feat[w, new] += 1
            n_cat[m, new] += 1
            if new != old:
                changed += 1
    return changed


def infer(int64_t[::1] z,
          const int64_t[::1] tok_word,
          const double[:, ::1] phi_t,
          double alpha,
          int64_t[::1] n_k,
          const double[:, ::1] uniforms,
          Py_ssize_t burn_in,
          double[::1] acc,
          double[::1] cum):
    cdef Py_ssize_t n = z.shape[0]
    cdef Py_ssize_t K = n_k.shape[0]
    cdef Py_ssize_t S = uniforms.shape[0]
    cdef Py_ssize_t s, t, k, w, old, new
    cdef Py_ssize_t kept = 0
    cdef double p, total
    cdef double denom = n + K * alpha
    with nogil:
        for s in range(S):
            for t in range(n):
                w = tok_word[t]
                old = z[t]
                n_k[old] -= 1
                total = 0.0
                for k in range(K):
                    p = (n_k[k] + alpha) * phi_t[w, k]
                    total = total + p
                    cum[k] = total
                new = _draw(cum, K, uniforms[s, t])
                z[t] = new
                n_k[new] += 1
            if s >= burn_in:
                for k in range(K):
                    acc[k] = acc[k] + (n_k[k] + alpha) / denom
                kept += 1
    return kept
