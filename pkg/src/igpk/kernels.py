"""ARD squared-exponential (Gaussian RBF) kernel and its hyperparameter gradients.

The pairwise loops run in a compiled extension when it is available and fall
back to numpy otherwise; :func:`use_backend` switches explicitly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels_py
from .errors import DimensionMismatch, NonFiniteInput
from .numerics import as_matrix

try:
    from . import _kernels_ext
except ImportError:  # pragma: no cover - depends on the build
    _kernels_ext = None

__all__ = [
    "KernelHyperparams",
    "available_backends",
    "backend_name",
    "gram",
    "gram_grad_hyper",
    "rbf_eval",
    "use_backend",
]

_core = _kernels_ext if _kernels_ext is not None else _kernels_py


def available_backends():
    return ["cython", "python"] if _kernels_ext is not None else ["python"]


def backend_name():
    return "cython" if _core is _kernels_ext and _kernels_ext is not None else "python"


def use_backend(name):
    """Select ``"cython"`` or ``"python"`` for the pairwise kernel loops."""
    global _core
    if name == "python":
        _core = _kernels_py
    elif name == "cython":
        if _kernels_ext is None:
            raise ImportError("compiled kernel extension is not built")
        _core = _kernels_ext
    else:
        raise ValueError(f"unknown backend {name!r}")


def core():
    return _core


@dataclass(frozen=True)
class KernelHyperparams:
    """Log-parameterized RBF hyperparameters.

    ``log_lengthscales`` has one entry per input dimension. The noise variance
    travels with the kernel but is only ever added on a training Gram diagonal.
    """

    log_lengthscales: np.ndarray
    log_signal_var: float = 0.0
    log_noise_var: float = float(np.log(1e-2))

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.log_lengthscales, dtype=np.float64)).copy()
        ls.setflags(write=False)
        object.__setattr__(self, "log_lengthscales", ls)
        object.__setattr__(self, "log_signal_var", float(self.log_signal_var))
        object.__setattr__(self, "log_noise_var", float(self.log_noise_var))
        if not (np.all(np.isfinite(ls)) and np.isfinite(self.log_signal_var)
                and np.isfinite(self.log_noise_var)):
            raise NonFiniteInput("kernel hyperparameters must be finite")

    @property
    def n_x(self):
        return self.log_lengthscales.size

    @property
    def lengthscales(self):
        return np.exp(self.log_lengthscales)

    @property
    def signal_var(self):
        return float(np.exp(self.log_signal_var))

    @property
    def noise_var(self):
        return float(np.exp(self.log_noise_var))

    @property
    def size(self):
        return self.n_x + 2

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.log_lengthscales, [self.log_signal_var, self.log_noise_var]])

    @classmethod
    def from_vector(cls, v) -> "KernelHyperparams":
        v = np.asarray(v, dtype=np.float64)
        return cls(v[:-2], v[-2], v[-1])

    def __eq__(self, other):
        if not isinstance(other, KernelHyperparams):
            return NotImplemented
        return np.array_equal(self.to_vector(), other.to_vector())

    def __hash__(self):
        return hash(self.to_vector().tobytes())


def _inv_ls2(theta):
    return np.exp(-2.0 * theta.log_lengthscales)


def _points(X, theta, name):
    X = as_matrix(X, name)
    if X.shape[0] != theta.n_x:
        raise DimensionMismatch(
            f"{name} has {X.shape[0]} rows but theta has {theta.n_x} lengthscales"
        )
    return np.ascontiguousarray(X.T)


def rbf_eval(x, x2, theta: KernelHyperparams) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    x2 = np.atleast_1d(np.asarray(x2, dtype=np.float64))
    if x.shape != (theta.n_x,) or x2.shape != (theta.n_x,):
        raise DimensionMismatch("state vectors must match the lengthscale count")
    r2 = np.sum((x - x2) ** 2 * _inv_ls2(theta))
    return theta.signal_var * float(np.exp(-0.5 * r2))


def gram(Xa, Xb, theta: KernelHyperparams) -> np.ndarray:
    """Cross-covariance between the columns of ``Xa`` and ``Xb`` (no noise term)."""
    Pa = _points(Xa, theta, "Xa")
    Pb = _points(Xb, theta, "Xb")
    return _core.rbf_cross(Pa, Pb, _inv_ls2(theta), theta.signal_var)


def gram_grad_hyper(X0, theta: KernelHyperparams):
    """Derivatives of ``K(X0, X0) + noise_var I`` w.r.t. each log-hyperparameter.

    Order matches :meth:`KernelHyperparams.to_vector`: one matrix per
    lengthscale, then signal variance, then noise variance.
    """
    P = _points(X0, theta, "X0")
    inv = _inv_ls2(theta)
    K = _core.rbf_cross(P, P, inv, theta.signal_var)
    grads = list(_core.rbf_lengthscale_grads(P, inv, K))
    grads.append(K)
    grads.append(theta.noise_var * np.eye(P.shape[0]))
    return grads
