# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled enumeration kernels; see :mod:`moxi._kernels_py` for semantics."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

ctypedef unsigned long long mask_t


cdef extern from *:
    int __builtin_popcountll(unsigned long long) nogil


cdef inline int _popcount(mask_t x) nogil:
    return __builtin_popcountll(x)


def block_marginal_sum(const double[::1] table, mask_t others_mask, mask_t block_mask,
                       const double[::1] weights):
    cdef double acc = 0.0
    cdef mask_t t = others_mask
    with nogil:
        while True:
            acc += weights[_popcount(t)] * (table[t | block_mask] - table[t])
            if t == 0:
                break
            t = (t - 1) & others_mask
    return acc


def deletion_marginal_sum(const double[::1] table, mask_t context_mask, int player,
                          const double[::1] weights):
    cdef mask_t bit = (<mask_t>1) << player
    cdef mask_t rest = context_mask & ~bit
    cdef mask_t t = rest
    cdef double acc = 0.0
    with nogil:
        while True:
            acc += weights[_popcount(t)] * (table[t | bit] - table[t])
            if t == 0:
                break
            t = (t - 1) & rest
    return acc


def all_shapley(const double[::1] table, int m, const double[::1] weights):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(m, dtype=np.float64)
    cdef double[::1] phi = out
    cdef mask_t full = ((<mask_t>1) << m) - 1
    cdef mask_t t, bit
    cdef double w, base
    cdef int i
    with nogil:
        for t in range(full):  # the full mask has no absent player
            w = weights[_popcount(t)]
            base = table[t]
            for i in range(m):
                bit = (<mask_t>1) << i
                if not (t & bit):
                    phi[i] += w * (table[t | bit] - base)
    return out


def popcounts(int m):
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.zeros((<mask_t>1) << m, dtype=np.int64)
    cdef cnp.int64_t[::1] view = out
    cdef mask_t t
    with nogil:
        for t in range(1, (<mask_t>1) << m):
            view[t] = _popcount(t)
    return out
