"""Single-output GP observables: posterior mean/variance and marginal likelihood.

Zero prior mean throughout. The noise variance from the hyperparameters is
added only on the training Gram diagonal.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg

from .errors import DimensionMismatch
from .kernels import KernelHyperparams, gram, gram_grad_hyper
from .numerics import DEFAULT_POLICY, SpdPolicy, as_matrix, cholesky_factor

__all__ = [
    "GPObservable",
    "mean_operator",
    "nlml",
    "nlml_grad",
    "posterior_mean",
    "posterior_var",
]

_LOG_2PI = float(np.log(2.0 * np.pi))


def _train_factor(X0, theta, policy):
    K = gram(X0, X0, theta)
    K[np.diag_indices_from(K)] += theta.noise_var
    L, _ = cholesky_factor(K, policy)
    return L


@dataclass(frozen=True, eq=False)
class GPObservable:
    """One lifted coordinate: a GP conditioned on ``(train_inputs, virtual_targets)``.

    Instances are immutable; the Cholesky factor of the noisy training Gram is
    computed once on first use.
    """

    train_inputs: np.ndarray
    virtual_targets: np.ndarray
    theta: KernelHyperparams
    policy: SpdPolicy = DEFAULT_POLICY

    def __post_init__(self):
        X0 = as_matrix(self.train_inputs, "train_inputs").copy()
        Z = np.asarray(self.virtual_targets, dtype=np.float64).reshape(-1).copy()
        if Z.size != X0.shape[1]:
            raise DimensionMismatch(
                f"{Z.size} virtual targets for {X0.shape[1]} training inputs"
            )
        if X0.shape[0] != self.theta.n_x:
            raise DimensionMismatch("train_inputs rows must match theta lengthscales")
        X0.setflags(write=False)
        Z.setflags(write=False)
        object.__setattr__(self, "train_inputs", X0)
        object.__setattr__(self, "virtual_targets", Z)

    @cached_property
    def chol(self) -> np.ndarray:
        return _train_factor(self.train_inputs, self.theta, self.policy)

    @cached_property
    def alpha(self) -> np.ndarray:
        return linalg.cho_solve((self.chol, True), self.virtual_targets, check_finite=False)

    def with_targets(self, Z) -> "GPObservable":
        return GPObservable(self.train_inputs, Z, self.theta, self.policy)

    def with_theta(self, theta) -> "GPObservable":
        return GPObservable(self.train_inputs, self.virtual_targets, theta, self.policy)


def posterior_mean(gpo: GPObservable, Xq) -> np.ndarray:
    """Posterior mean at the columns of ``Xq`` as a flat length-m vector."""
    Kq = gram(Xq, gpo.train_inputs, gpo.theta)
    return Kq @ gpo.alpha


def posterior_var(gpo: GPObservable, Xq) -> np.ndarray:
    """Latent posterior variance at the columns of ``Xq``, floored at zero."""
    Kq = gram(Xq, gpo.train_inputs, gpo.theta)
    V = linalg.solve_triangular(gpo.chol, Kq.T, lower=True, check_finite=False)
    var = gpo.theta.signal_var - np.einsum("ij,ij->j", V, V)
    return np.maximum(var, 0.0)


def mean_operator(theta: KernelHyperparams, X0, Xq, policy: SpdPolicy = DEFAULT_POLICY):
    """Matrix ``A`` with ``posterior_mean(Xq) = A @ Z`` for any targets ``Z``.

    ``A = K(Xq, X0) (K(X0, X0) + noise_var I)^{-1}``, shape ``(m, n_T)``.
    """
    L = _train_factor(X0, theta, policy)
    Kq = gram(Xq, X0, theta)
    return linalg.cho_solve((L, True), Kq.T, check_finite=False).T


def _targets(X0, Z):
    X0 = as_matrix(X0, "X0")
    Z = np.asarray(Z, dtype=np.float64).reshape(-1)
    if Z.size != X0.shape[1]:
        raise DimensionMismatch(f"{Z.size} targets for {X0.shape[1]} inputs")
    return X0, Z


def nlml(theta: KernelHyperparams, X0, Z, policy: SpdPolicy = DEFAULT_POLICY) -> float:
    """Negative log marginal likelihood ``0.5 [Z^T Ky^{-1} Z + log|Ky| + n log 2pi]``.

    ``Ky`` is the noise-augmented training Gram.
    """
    X0, Z = _targets(X0, Z)
    L = _train_factor(X0, theta, policy)
    alpha = linalg.cho_solve((L, True), Z, check_finite=False)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return 0.5 * (float(Z @ alpha) + logdet + Z.size * _LOG_2PI)


def nlml_grad(theta: KernelHyperparams, X0, Z, policy: SpdPolicy = DEFAULT_POLICY) -> np.ndarray:
    """Gradient of :func:`nlml` w.r.t. ``theta.to_vector()``.

    Uses ``0.5 tr((Ky^{-1} - a a^T) dKy)`` with ``a = Ky^{-1} Z``.
    """
    X0, Z = _targets(X0, Z)
    L = _train_factor(X0, theta, policy)
    Kinv = linalg.cho_solve((L, True), np.eye(Z.size), check_finite=False)
    alpha = Kinv @ Z
    W = Kinv - np.outer(alpha, alpha)
    return np.array([0.5 * np.sum(W * dK) for dK in gram_grad_hyper(X0, theta)])


def nlml_and_grad(theta: KernelHyperparams, X0, Z, policy: SpdPolicy = DEFAULT_POLICY):
    """Both :func:`nlml` and :func:`nlml_grad` from one factorization."""
    X0, Z = _targets(X0, Z)
    L = _train_factor(X0, theta, policy)
    Kinv = linalg.cho_solve((L, True), np.eye(Z.size), check_finite=False)
    alpha = Kinv @ Z
    value = 0.5 * (float(Z @ alpha) + 2.0 * np.sum(np.log(np.diag(L))) + Z.size * _LOG_2PI)
    W = Kinv - np.outer(alpha, alpha)
    grad = np.array([0.5 * np.sum(W * dK) for dK in gram_grad_hyper(X0, theta)])
    return value, grad
