"""Single-spin-flip Metropolis annealing kernel.

Each read owns a splitmix64 stream seeded from (batch seed, read index),
so any read can be reproduced on its own.
"""

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_S63 = np.uint64(63)
_INV53 = 1.0 / 9007199254740992.0


@njit(inline="always")
def _mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True)
def read_stream_seed(seed, read_index):
    return _mix(np.uint64(seed) ^ _mix(np.uint64(read_index) + _GOLDEN))


@njit(cache=True)
def anneal_reads(h, indptr, nbrs, weights, betas, seed, first_read, out):
    """Fill ``out`` (reads x n, int8) with final configurations."""
    n_reads, n = out.shape
    field = np.empty(n)
    s = np.empty(n)
    for r in range(n_reads):
        state = read_stream_seed(seed, first_read + r)
        for i in range(n):
            state += _GOLDEN
            s[i] = 1.0 if (_mix(state) >> _S63) else -1.0
        for i in range(n):
            f = h[i]
            for k in range(indptr[i], indptr[i + 1]):
                f += weights[k] * s[nbrs[k]]
            field[i] = f
        for beta in betas:
            for i in range(n):
                delta = -2.0 * s[i] * field[i]
                if delta > 0.0:
                    state += _GOLDEN
                    u = (_mix(state) >> _S11) * _INV53
                    if u >= np.exp(-beta * delta):
                        continue
                step = 2.0 * s[i]
                s[i] = -s[i]
                for k in range(indptr[i], indptr[i + 1]):
                    field[nbrs[k]] -= weights[k] * step
        for i in range(n):
            out[r, i] = 1 if s[i] > 0 else -1
    return out


@njit(cache=True)
def coin_flips(seed, reads, chains):
    """Deterministic fair coins (+1/-1) for each (read, chain) pair."""
    out = np.empty((reads.shape[0], chains.shape[0]), dtype=np.int8)
    for a in range(reads.shape[0]):
        base = read_stream_seed(seed, reads[a])
        for b in range(chains.shape[0]):
            out[a, b] = 1 if (_mix(base ^ _mix(np.uint64(chains[b]) + _GOLDEN)) >> _S63) else -1
    return out
