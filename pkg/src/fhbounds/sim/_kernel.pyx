# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled fork-join FIFO kernel; must stay arithmetically identical to _kernel_py."""

import numpy as np

cimport numpy as cnp


def run_chunk(
    const double[::1] arrivals,
    const cnp.int32_t[::1] cls,
    const double[:, ::1] services,
    const cnp.int64_t[::1] server_start,
    const cnp.int64_t[::1] n_alloc,
    const cnp.int64_t[::1] k_needed,
    double[::1] free_at,
    double[::1] busy,
    cnp.int64_t[::1] served,
    double[::1] out_delay,
):
    cdef Py_ssize_t m = arrivals.shape[0]
    cdef Py_ssize_t width = services.shape[1]
    cdef double[::1] best = np.empty(max(width, 1), dtype=np.float64)
    cdef Py_ssize_t i, j, pos, c, s, n, k, filled
    cdef double t, svc, start, done, d
    for i in range(m):
        c = cls[i]
        t = arrivals[i]
        n = n_alloc[c]
        k = k_needed[c]
        s = server_start[c]
        filled = 0
        for j in range(n):
            svc = services[i, j]
            start = free_at[s + j]
            if t > start:
                start = t
            done = start + svc
            free_at[s + j] = done
            busy[s + j] += svc
            served[s + j] += 1
            d = done - t
            # keep the k smallest completion offsets in ascending order
            if filled < k:
                pos = filled
                filled += 1
            elif d < best[k - 1]:
                pos = k - 1
            else:
                continue
            while pos > 0 and best[pos - 1] > d:
                best[pos] = best[pos - 1]
                pos -= 1
            best[pos] = d
        out_delay[i] = best[k - 1]
