"""Fixed observable dictionaries for the eDMD baselines."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import combinations_with_replacement
from math import comb

import numpy as np

from . import kernels
from .errors import DegenerateData, DimensionMismatch
from .numerics import as_matrix

__all__ = [
    "PolyDictionary",
    "RbfDictionary",
    "kmeans",
    "poly_lift",
    "thinplate_lift",
]


def monomial_exponents(n_x, degree):
    """Exponent tuples in graded-lexicographic order, constant first."""
    rows = []
    for deg in range(degree + 1):
        for idx in combinations_with_replacement(range(n_x), deg):
            e = [0] * n_x
            for i in idx:
                e[i] += 1
            rows.append(tuple(e))
    return rows


def poly_lift(X, degree: int) -> np.ndarray:
    X = as_matrix(X, "X")
    if degree < 1:
        raise ValueError("degree must be at least 1")
    exps = np.array(monomial_exponents(X.shape[0], degree), dtype=np.int64)
    # (n_z, n_x, 1) ** broadcast over columns
    return np.prod(X[None, :, :] ** exps[:, :, None], axis=1)


@dataclass(frozen=True)
class PolyDictionary:
    degree: int
    n_x: int

    def __post_init__(self):
        if self.degree < 1 or self.n_x < 1:
            raise ValueError("degree and n_x must be positive")

    @property
    def n_z(self):
        return comb(self.n_x + self.degree, self.degree)

    def lift(self, X):
        X = as_matrix(X, "X")
        if X.shape[0] != self.n_x:
            raise DimensionMismatch(f"expected {self.n_x} state rows, got {X.shape[0]}")
        return poly_lift(X, self.degree)


@dataclass(frozen=True, eq=False)
class RbfDictionary:
    """Thin-plate spline features around fixed centers (columns of ``centers``)."""

    centers: np.ndarray
    include_state: bool = True
    include_constant: bool = True

    def __post_init__(self):
        c = as_matrix(self.centers, "centers").copy()
        if c.shape[1] < 1:
            raise ValueError("at least one center is required")
        c.setflags(write=False)
        object.__setattr__(self, "centers", c)

    @property
    def n_x(self):
        return self.centers.shape[0]

    @property
    def n_z(self):
        return self.centers.shape[1] + self.n_x * self.include_state + self.include_constant

    def lift(self, X):
        return thinplate_lift(X, self)


def thinplate_lift(X, dictionary: RbfDictionary) -> np.ndarray:
    X = as_matrix(X, "X")
    if X.shape[0] != dictionary.n_x:
        raise DimensionMismatch(f"expected {dictionary.n_x} state rows, got {X.shape[0]}")
    feats = kernels.core().thinplate(
        np.ascontiguousarray(X.T), np.ascontiguousarray(dictionary.centers.T)
    )
    blocks = []
    if dictionary.include_constant:
        blocks.append(np.ones((1, X.shape[1])))
    if dictionary.include_state:
        blocks.append(X)
    blocks.append(feats)
    return np.vstack(blocks)


def _sqdist(P, C):
    return ((P[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def kmeans(X, k: int, seed: int = 0, max_iters: int = 300, tol: float = 0.0, return_history=False):
    """Lloyd's algorithm with k-means++ seeding.

    Points are the columns of ``X``. Empty clusters are moved to the point
    farthest from its current center. Returns centers as an ``(n_x, k)`` matrix
    (and the per-iteration inertia when ``return_history`` is set).
    """
    X = as_matrix(X, "X")
    P = X.T
    m = P.shape[0]
    if k < 1 or k > m:
        raise ValueError(f"k must lie in [1, {m}]")
    if np.unique(P, axis=0).shape[0] < k:
        raise DegenerateData(f"fewer than {k} distinct points")
    rng = np.random.default_rng(seed)

    # k-means++ seeding; chosen points get zero weight so distinct data gives distinct centers
    centers = np.empty((k, P.shape[1]))
    centers[0] = P[rng.integers(m)]
    closest = _sqdist(P, centers[:1])[:, 0]
    for j in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = rng.choice(m, p=closest / total)
        else:
            idx = rng.integers(m)
        centers[j] = P[idx]
        closest = np.minimum(closest, _sqdist(P, centers[j : j + 1])[:, 0])

    history = []
    labels = None
    for _ in range(max_iters):
        d2 = _sqdist(P, centers)
        new_labels = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(m), new_labels].sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        new_centers = centers.copy()
        counts = np.bincount(labels, minlength=k)
        for j in range(k):
            if counts[j]:
                new_centers[j] = P[labels == j].mean(axis=0)
        for j in np.flatnonzero(counts == 0):
            far = int(np.argmax(d2[np.arange(m), labels]))
            new_centers[j] = P[far]
            labels[far] = j
            d2[far, :] = 0.0
        shift = np.max(np.abs(new_centers - centers))
        centers = new_centers
        if shift <= tol:
            break
    out = np.ascontiguousarray(centers.T)
    return (out, history) if return_history else out
