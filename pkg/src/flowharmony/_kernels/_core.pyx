# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: code propagation, grouped sums, block matching.

Semantics match `_python.py`; see that module for the contract of each
function.  Scan and accumulation orders are row-major so that codes and
repository values are bit-identical to the fallback backend.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND_NAME = "compiled"


def propagate_codes(cnp.int64_t[:, :] prev_codes,
                    cnp.int64_t[:, :] dest_y,
                    cnp.int64_t[:, :] dest_x,
                    cnp.uint8_t[:, :] fresh,
                    cnp.int64_t start):
    cdef Py_ssize_t h = prev_codes.shape[0]
    cdef Py_ssize_t w = prev_codes.shape[1]
    out_arr = np.empty((h, w), dtype=np.int64)
    cdef cnp.int64_t[:, :] out = out_arr
    cdef cnp.int64_t n = start
    cdef Py_ssize_t y, x
    for y in range(h):
        for x in range(w):
            if fresh[y, x]:
                out[y, x] = n
                n += 1
            else:
                out[y, x] = prev_codes[dest_y[y, x], dest_x[y, x]]
    return out_arr, int(n)


def group_sums(cnp.int64_t[:] codes, cnp.float64_t[:, :] values, Py_ssize_t n):
    cdef Py_ssize_t p = codes.shape[0]
    cdef Py_ssize_t c = values.shape[1]
    sums_arr = np.zeros((n, c), dtype=np.float64)
    counts_arr = np.zeros(n, dtype=np.int64)
    cdef cnp.float64_t[:, :] sums = sums_arr
    cdef cnp.int64_t[:] counts = counts_arr
    cdef Py_ssize_t i, j
    cdef cnp.int64_t k
    for i in range(p):
        k = codes[i]
        counts[k] += 1
        for j in range(c):
            sums[k, j] += values[i, j]
    return sums_arr, counts_arr


def block_match(cnp.float64_t[:, :, :] ref, cnp.float64_t[:, :, :] tgt,
                int radius, int patch):
    from ._python import displacement_order

    cdef Py_ssize_t ch = ref.shape[0]
    cdef Py_ssize_t h = ref.shape[1]
    cdef Py_ssize_t w = ref.shape[2]
    cdef int half = patch // 2
    cdef int pad_r = half
    cdef int pad_t = radius + half

    ref_p_arr = np.pad(np.asarray(ref), ((0, 0), (pad_r, pad_r), (pad_r, pad_r)),
                       mode="edge")
    tgt_p_arr = np.pad(np.asarray(tgt), ((0, 0), (pad_t, pad_t), (pad_t, pad_t)),
                       mode="edge")
    cdef cnp.float64_t[:, :, :] ref_p = ref_p_arr
    cdef cnp.float64_t[:, :, :] tgt_p = tgt_p_arr

    order = np.asarray(displacement_order(radius), dtype=np.int64)
    cdef cnp.int64_t[:, :] disp = order
    cdef Py_ssize_t ndisp = disp.shape[0]

    best_d_arr = np.zeros((h, w, 2), dtype=np.int64)
    cdef cnp.int64_t[:, :, :] best_d = best_d_arr
    cdef cnp.float64_t best, ssd, diff
    cdef Py_ssize_t y, x, k, py, px, cc
    cdef cnp.int64_t dy, dx

    for y in range(h):
        for x in range(w):
            best = -1.0
            for k in range(ndisp):
                dy = disp[k, 0]
                dx = disp[k, 1]
                ssd = 0.0
                for cc in range(ch):
                    for py in range(patch):
                        for px in range(patch):
                            diff = (ref_p[cc, y + py, x + px]
                                    - tgt_p[cc, y + dy + radius + py,
                                            x + dx + radius + px])
                            ssd += diff * diff
                if best < 0.0 or ssd < best:
                    best = ssd
                    best_d[y, x, 0] = dy
                    best_d[y, x, 1] = dx
    return best_d_arr
