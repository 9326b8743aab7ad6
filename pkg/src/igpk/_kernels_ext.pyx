# Compiled kernel core. Mirrors igpk._kernels_py exactly.
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log

cnp.import_array()


def rbf_cross(const double[:, ::1] Pa, const double[:, ::1] Pb,
              const double[::1] inv_ls2, double sf2):
    cdef Py_ssize_t m = Pa.shape[0], p = Pb.shape[0], n_x = Pa.shape[1]
    cdef Py_ssize_t i, j, d
    cdef double acc, diff
    out = np.empty((m, p), dtype=np.float64)
    cdef double[:, ::1] K = out
    with nogil:
        for i in range(m):
            for j in range(p):
                acc = 0.0
                for d in range(n_x):
                    diff = Pa[i, d] - Pb[j, d]
                    acc = acc + diff * diff * inv_ls2[d]
                K[i, j] = sf2 * exp(-0.5 * acc)
    return out


def rbf_lengthscale_grads(const double[:, ::1] P, const double[::1] inv_ls2,
                          const double[:, ::1] K):
    cdef Py_ssize_t n = P.shape[0], n_x = P.shape[1]
    cdef Py_ssize_t i, j, d
    cdef double diff, v
    out = np.empty((n_x, n, n), dtype=np.float64)
    cdef double[:, :, ::1] G = out
    with nogil:
        for d in range(n_x):
            for i in range(n):
                G[d, i, i] = 0.0
                for j in range(i + 1, n):
                    diff = P[i, d] - P[j, d]
                    v = K[i, j] * diff * diff * inv_ls2[d]
                    G[d, i, j] = v
                    G[d, j, i] = v
    return out


def thinplate(const double[:, ::1] P, const double[:, ::1] centers):
    cdef Py_ssize_t m = P.shape[0], k = centers.shape[0], n_x = P.shape[1]
    cdef Py_ssize_t i, j, d
    cdef double acc, diff
    out = np.empty((k, m), dtype=np.float64)
    cdef double[:, ::1] F = out
    with nogil:
        for j in range(k):
            for i in range(m):
                acc = 0.0
                for d in range(n_x):
                    diff = P[i, d] - centers[j, d]
                    acc = acc + diff * diff
                if acc > 0.0:
                    F[j, i] = 0.5 * acc * log(acc)
                else:
                    F[j, i] = 0.0
    return out
