"""Pure-numpy kernel core. Same signatures as the Cython extension.

Points are passed row-wise: ``(n_points, n_x)`` C-contiguous arrays.
Squared distances are accumulated from coordinate differences (not the
``|a|^2 + |b|^2 - 2ab`` expansion) so results are translation exact.
"""
import numpy as np


def _weighted_sqdist(Pa, Pb, w):
    acc = np.zeros((Pa.shape[0], Pb.shape[0]))
    for d in range(Pa.shape[1]):
        diff = Pa[:, d][:, None] - Pb[:, d][None, :]
        acc += diff * diff * w[d]
    return acc


def rbf_cross(Pa, Pb, inv_ls2, sf2):
    """``sf2 * exp(-0.5 * sum_d (a_d - b_d)^2 * inv_ls2_d)`` for every pair."""
    return sf2 * np.exp(-0.5 * _weighted_sqdist(Pa, Pb, inv_ls2))


def rbf_lengthscale_grads(P, inv_ls2, K):
    """Stack of ``dK/dlog(l_d) = K * (p_d - q_d)^2 * inv_ls2_d``, shape (n_x, m, m)."""
    n, n_x = P.shape
    out = np.empty((n_x, n, n))
    for d in range(n_x):
        diff = P[:, d][:, None] - P[:, d][None, :]
        out[d] = K * (diff * diff) * inv_ls2[d]
    return out


def thinplate(P, centers):
    """``r^2 log r`` features, shape (n_centers, n_points); 0 at r = 0."""
    d2 = _weighted_sqdist(centers, P, np.ones(P.shape[1]))
    out = np.zeros_like(d2)
    pos = d2 > 0
    # r^2 log r = 0.5 * r^2 log(r^2)
    out[pos] = 0.5 * d2[pos] * np.log(d2[pos])
    return out
