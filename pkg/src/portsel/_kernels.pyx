# cython: language_level=3
"""Compiled versions of the hot loops; same contracts as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp
from libc.stdint cimport uint64_t, int64_t
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef uint64_t FNV_OFFSET = 0xCBF29CE484222325ULL
cdef uint64_t FNV_PRIME = 0x100000001B3ULL
SIGN_SALT = 0x9E3779B97F4A7C15
PROB_EPS = 1e-12


cdef inline uint64_t _absorb(uint64_t state, const unsigned char* data, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    for i in range(n):
        state = (state ^ data[i]) * FNV_PRIME
    return state


cdef uint64_t _salted(uint64_t seed) noexcept nogil:
    cdef unsigned char buf[8]
    cdef int i
    for i in range(8):
        buf[i] = (seed >> (8 * i)) & 0xFF
    return _absorb(FNV_OFFSET, buf, 8)


def fnv1a64(bytes data, state=None):
    cdef uint64_t s = FNV_OFFSET if state is None else <uint64_t>state
    return _absorb(s, <const unsigned char*>data, len(data))


def salted_basis(seed):
    return _salted(<uint64_t>(seed & 0xFFFFFFFFFFFFFFFF))


def hashed_counts(tokens, orders, seed, Py_ssize_t dim):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(dim, dtype=np.float64)
    cdef list encoded = [t.encode("utf-8") for t in tokens]
    cdef Py_ssize_t n_tok = len(encoded)
    cdef uint64_t useed = <uint64_t>(seed & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t b_bucket = _salted(useed)
    cdef uint64_t b_sign = _salted(useed ^ <uint64_t>SIGN_SALT)
    cdef uint64_t h, s
    cdef Py_ssize_t i, j, n
    cdef const unsigned char** ptrs
    cdef Py_ssize_t* lens
    cdef unsigned char space = 32
    cdef bytes tok
    if n_tok == 0:
        return out
    ptrs = <const unsigned char**>malloc(n_tok * sizeof(const unsigned char*))
    lens = <Py_ssize_t*>malloc(n_tok * sizeof(Py_ssize_t))
    if ptrs == NULL or lens == NULL:
        free(ptrs)
        free(lens)
        raise MemoryError()
    try:
        for i in range(n_tok):
            tok = encoded[i]
            ptrs[i] = <const unsigned char*>tok
            lens[i] = len(tok)
        for n in orders:
            for i in range(n_tok - n + 1):
                h = _absorb(b_bucket, ptrs[i], lens[i])
                s = _absorb(b_sign, ptrs[i], lens[i])
                for j in range(i + 1, i + n):
                    h = _absorb(h, &space, 1)
                    s = _absorb(s, &space, 1)
                    h = _absorb(h, ptrs[j], lens[j])
                    s = _absorb(s, ptrs[j], lens[j])
                if s >> 63:
                    out[h % <uint64_t>dim] -= 1.0
                else:
                    out[h % <uint64_t>dim] += 1.0
    finally:
        free(ptrs)
        free(lens)
    return out


def softmax(z):
    e = np.exp(z - np.max(z))
    return e / e.sum()


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


cdef inline double _sigmoid(double z) noexcept nogil:
    cdef double ez
    if z >= 0:
        return 1.0 / (1.0 + exp(-z))
    ez = exp(z)
    return ez / (1.0 + ez)


cdef void _logits(double[:, ::1] W, double[::1] b, double[:, ::1] X, Py_ssize_t k,
                  double* z) noexcept nogil:
    cdef Py_ssize_t r, c
    cdef double acc
    for r in range(W.shape[0]):
        acc = 0.0
        for c in range(W.shape[1]):
            acc += W[r, c] * X[k, c]
        z[r] = acc + b[r]


cdef void _step(double[:, ::1] W, double[::1] b, double[:, ::1] X, Py_ssize_t k,
                double* g, double lr) noexcept nogil:
    cdef Py_ssize_t r, c
    cdef double gr
    for r in range(W.shape[0]):
        gr = lr * g[r]
        if gr == 0.0:
            continue
        for c in range(W.shape[1]):
            W[r, c] -= gr * X[k, c]
        b[r] -= gr


cdef void _multilabel_epoch(double[:, ::1] W, double[::1] b, double[:, ::1] X, double[:, ::1] Y,
                            int64_t[::1] order, double lr, double w, double* z) noexcept nogil:
    cdef Py_ssize_t n = W.shape[0]
    cdef Py_ssize_t t, r, k
    cdef double s, y
    for t in range(order.shape[0]):
        k = order[t]
        _logits(W, b, X, k, z)
        for r in range(n):
            s = _sigmoid(z[r])
            y = Y[k, r]
            z[r] = ((1.0 + (w - 1.0) * y) * s - w * y) / n
        _step(W, b, X, k, z, lr)


cdef void _multiclass_epoch(double[:, ::1] W, double[::1] b, double[:, ::1] X, int64_t[::1] T,
                            int64_t[::1] order, double lr, double* z) noexcept nogil:
    cdef Py_ssize_t n = W.shape[0]
    cdef Py_ssize_t t, r, k, tgt
    cdef double m, total
    for t in range(order.shape[0]):
        k = order[t]
        tgt = T[k]
        _logits(W, b, X, k, z)
        m = z[0]
        for r in range(1, n):
            if z[r] > m:
                m = z[r]
        total = 0.0
        for r in range(n):
            z[r] = exp(z[r] - m)
            total += z[r]
        for r in range(n):
            z[r] /= total
        z[tgt] -= 1.0
        _step(W, b, X, k, z, lr)


def sgd_epoch(W, b, X, targets, order, double lr, bint multilabel, double recall_weight):
    cdef double[:, ::1] Wv = W
    cdef double[::1] bv = b
    cdef double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef int64_t[::1] ov = np.ascontiguousarray(order, dtype=np.int64)
    cdef double[:, ::1] Yv
    cdef int64_t[::1] Tv
    cdef double* z = <double*>malloc(Wv.shape[0] * sizeof(double))
    if z == NULL:
        raise MemoryError()
    try:
        if multilabel:
            Yv = np.ascontiguousarray(targets, dtype=np.float64)
            with nogil:
                _multilabel_epoch(Wv, bv, Xv, Yv, ov, lr, recall_weight, z)
        else:
            Tv = np.ascontiguousarray(targets, dtype=np.int64)
            with nogil:
                _multiclass_epoch(Wv, bv, Xv, Tv, ov, lr, z)
    finally:
        free(z)
