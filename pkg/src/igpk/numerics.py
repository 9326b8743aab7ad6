"""Dense linear-algebra primitives with explicit jitter and rank policies.

Everything here works in float64 and rejects non-finite input.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import DimensionMismatch, NonFiniteInput, NotSpd

__all__ = [
    "SpdPolicy",
    "as_matrix",
    "cholesky_factor",
    "cholesky_solve",
    "pinv_svd",
    "ridge_solve_right",
]


@dataclass(frozen=True)
class SpdPolicy:
    """Jitter schedule for near-singular symmetric matrices.

    A factorization is first attempted with no jitter; on failure ``jitter``
    is added to the diagonal and doubled up to ``max_jitter_doublings`` times.
    """

    jitter: float = 1e-8
    max_jitter_doublings: int = 10

    def __post_init__(self):
        if not self.jitter > 0:
            raise ValueError("jitter must be positive")
        if self.max_jitter_doublings < 0:
            raise ValueError("max_jitter_doublings must be non-negative")

    def schedule(self):
        yield 0.0
        for k in range(self.max_jitter_doublings + 1):
            yield self.jitter * 2.0**k


DEFAULT_POLICY = SpdPolicy()


def as_matrix(a, name="array", ndim=2) -> np.ndarray:
    """Convert to a float64 array of the given rank, rejecting NaN/Inf."""
    arr = np.asarray(a, dtype=np.float64)
    if ndim == 2 and arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != ndim:
        raise DimensionMismatch(f"{name} must be {ndim}-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInput(f"{name} contains non-finite entries")
    return arr


def _check_symmetric(A, tol=1e-10):
    if A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got {A.shape}")
    scale = max(np.max(np.abs(A)), 1.0) if A.size else 1.0
    if A.size and np.max(np.abs(A - A.T)) > tol * scale:
        raise NotSpd("matrix is not symmetric")


def cholesky_factor(A, policy: SpdPolicy = DEFAULT_POLICY):
    """Lower Cholesky factor of ``A + jI`` for the smallest working jitter.

    Returns
    -------
    L : ndarray
        Lower-triangular factor.
    jitter : float
        The diagonal shift that was needed (0.0 if none).
    """
    A = as_matrix(A, "A")
    _check_symmetric(A)
    eye = np.eye(A.shape[0])
    for j in policy.schedule():
        try:
            L = linalg.cholesky(A + j * eye if j else A, lower=True, check_finite=False)
        except linalg.LinAlgError:
            continue
        if np.all(np.diag(L) > 0):
            return L, j
    raise NotSpd(
        f"matrix not positive definite after {policy.max_jitter_doublings} "
        f"jitter doublings from {policy.jitter:g}"
    )


def cholesky_solve(A, B, policy: SpdPolicy = DEFAULT_POLICY):
    """Solve ``(A + jI) X = B`` by Cholesky, with ``j`` from the jitter schedule.

    Returns
    -------
    X : ndarray
        Solution with the same shape as ``B``.
    logdet : float
        ``log|A + jI|``.
    """
    B_arr = np.asarray(B, dtype=np.float64)
    vector = B_arr.ndim == 1
    B2 = as_matrix(B_arr, "B")
    L, _ = cholesky_factor(A, policy)
    if B2.shape[0] != L.shape[0]:
        raise DimensionMismatch(f"B has {B2.shape[0]} rows, A is {L.shape[0]}x{L.shape[0]}")
    X = linalg.cho_solve((L, True), B2, check_finite=False)
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    return (X[:, 0] if vector else X), logdet


def pinv_svd(A, rank_tol_factor: float | None = None) -> np.ndarray:
    """Moore-Penrose pseudo-inverse ``V diag(1/s) U^T`` with rank truncation.

    Singular values below ``rank_tol_factor * max(rows, cols) * s_max`` are
    treated as zero. The factor defaults to machine epsilon.
    """
    A = as_matrix(A, "A")
    if rank_tol_factor is None:
        rank_tol_factor = np.finfo(np.float64).eps
    if A.size == 0:
        return np.zeros(A.T.shape)
    U, s, Vt = linalg.svd(A, full_matrices=False, check_finite=False)
    cutoff = rank_tol_factor * max(A.shape) * (s[0] if s.size else 0.0)
    inv_s = np.zeros_like(s)
    keep = s > cutoff
    inv_s[keep] = 1.0 / s[keep]
    return (Vt.T * inv_s) @ U.T


def ridge_solve_right(B, A, lam: float) -> np.ndarray:
    """Minimizer of ``||B - M A||_F^2 + lam ||M||_F^2``.

    Computed as ``B A^T (A A^T + lam I)^{-1}`` through the thin SVD of ``A``,
    which stays well defined when ``A`` is rank deficient. ``lam = 0`` gives
    ``B A^+`` with exact-zero singular values dropped.
    """
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    if B.shape[1] != A.shape[1]:
        raise DimensionMismatch(f"B has {B.shape[1]} columns, A has {A.shape[1]}")
    if lam < 0:
        raise ValueError("lam must be non-negative")
    U, s, Vt = linalg.svd(A, full_matrices=False, check_finite=False)
    denom = s**2 + lam
    gain = np.divide(s, denom, out=np.zeros_like(s), where=denom > 0)
    return ((B @ Vt.T) * gain) @ U.T
