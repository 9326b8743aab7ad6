"""Finite-dimensional Koopman models: eDMD fitting, lifting and Gaussian propagation."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dictionaries import PolyDictionary, RbfDictionary
from .errors import DimensionMismatch, IoError
from .gp import GPObservable, posterior_mean, posterior_var
from .kernels import KernelHyperparams
from .numerics import as_matrix, pinv_svd

__all__ = [
    "FORMAT_VERSION",
    "GaussianState",
    "KoopmanModel",
    "edmd_fit",
    "lift_initial",
    "load_model",
    "propagate",
    "rollout",
    "save_model",
]

FORMAT_VERSION = 1


@dataclass(frozen=True, eq=False)
class GaussianState:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        cov = np.asarray(self.cov, dtype=np.float64)
        if cov.shape != (mean.size, mean.size):
            raise DimensionMismatch(f"cov shape {cov.shape} for mean of size {mean.size}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)


@dataclass(frozen=True, eq=False)
class KoopmanModel:
    """Operator ``K``, readout ``C`` and the observables that define the lift.

    ``observables`` is either a dictionary object with a ``lift`` method or a
    sequence of :class:`GPObservable`, one per lifted coordinate.
    """

    K: np.ndarray
    C: np.ndarray
    observables: object

    def __post_init__(self):
        K = as_matrix(self.K, "K")
        C = as_matrix(self.C, "C")
        if K.shape[0] != K.shape[1]:
            raise DimensionMismatch("K must be square")
        if C.shape[1] != K.shape[0]:
            raise DimensionMismatch("C column count must equal n_z")
        if self.is_probabilistic:
            object.__setattr__(self, "observables", tuple(self.observables))
            if len(self.observables) != K.shape[0]:
                raise DimensionMismatch("one GP observable per lifted coordinate is required")
        elif self.observables.n_z != K.shape[0]:
            raise DimensionMismatch("dictionary size does not match K")
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "C", C)

    @property
    def n_z(self):
        return self.K.shape[0]

    @property
    def n_x(self):
        return self.C.shape[0]

    @property
    def is_probabilistic(self):
        return not hasattr(self.observables, "lift")

    def lift(self, X):
        """Lifted means for the columns of ``X`` (shape ``(n_z, m)``)."""
        if self.is_probabilistic:
            return np.vstack([posterior_mean(g, X) for g in self.observables])
        return self.observables.lift(X)


def edmd_fit(Phi, PhiPlus, X):
    """Least-squares operator and readout: ``K = Phi+ Phi^+``, ``C = X Phi^+``."""
    Phi = as_matrix(Phi, "Phi")
    PhiPlus = as_matrix(PhiPlus, "PhiPlus")
    X = as_matrix(X, "X")
    if not (Phi.shape[1] == PhiPlus.shape[1] == X.shape[1]):
        raise DimensionMismatch("Phi, PhiPlus and X need equal column counts")
    if PhiPlus.shape[0] != Phi.shape[0]:
        raise DimensionMismatch("Phi and PhiPlus need equal row counts")
    pinv = pinv_svd(Phi)
    return PhiPlus @ pinv, X @ pinv


def lift_initial(model: KoopmanModel, x0) -> GaussianState:
    """Lift one state; GP banks give a diagonal covariance of posterior variances."""
    x0 = np.asarray(x0, dtype=np.float64).reshape(-1, 1)
    if x0.shape[0] != model.n_x:
        raise DimensionMismatch(f"state has {x0.shape[0]} entries, model expects {model.n_x}")
    if not model.is_probabilistic:
        return GaussianState(model.observables.lift(x0)[:, 0], np.zeros((model.n_z, model.n_z)))
    mean = np.array([posterior_mean(g, x0)[0] for g in model.observables])
    var = np.array([posterior_var(g, x0)[0] for g in model.observables])
    return GaussianState(mean, np.diag(var))


def _sym(V):
    return 0.5 * (V + V.T)


def propagate(model: KoopmanModel, init: GaussianState, steps: int):
    """Roll the lifted Gaussian forward; returns ``[(lifted, output), ...]`` of length steps+1."""
    if steps < 0:
        raise ValueError("steps must be non-negative")
    K, C = model.K, model.C
    z, V = init.mean, _sym(init.cov)
    out = []
    for k in range(steps + 1):
        if k:
            z = K @ z
            V = _sym(K @ V @ K.T)
        out.append((GaussianState(z, V), GaussianState(C @ z, _sym(C @ V @ C.T))))
    return out


def rollout(model: KoopmanModel, x0, steps: int):
    """Open-loop prediction from ``x0``.

    Returns
    -------
    means : ndarray, shape (steps+1, n_x)
    covs : ndarray, shape (steps+1, n_x, n_x)
    """
    seq = propagate(model, lift_initial(model, x0), steps)
    means = np.array([o.mean for _, o in seq])
    covs = np.array([o.cov for _, o in seq])
    return means, covs


def save_model(path, model: KoopmanModel, **extra):
    """Write a self-describing ``.npz`` (bit-exact float64 storage)."""
    payload = {
        "format_version": np.array(FORMAT_VERSION),
        "n_x": np.array(model.n_x),
        "n_z": np.array(model.n_z),
        "K": model.K,
        "C": model.C,
    }
    obs = model.observables
    if model.is_probabilistic:
        payload["kind"] = np.array("gp")
        payload["train_inputs"] = obs[0].train_inputs
        payload["virtual_targets"] = np.vstack([g.virtual_targets for g in obs])
        payload["hyperparams"] = np.vstack([g.theta.to_vector() for g in obs])
    elif isinstance(obs, PolyDictionary):
        payload["kind"] = np.array("poly")
        payload["degree"] = np.array(obs.degree)
    elif isinstance(obs, RbfDictionary):
        payload["kind"] = np.array("rbf")
        payload["centers"] = obs.centers
        payload["include_state"] = np.array(obs.include_state)
        payload["include_constant"] = np.array(obs.include_constant)
    else:
        raise TypeError(f"cannot serialize observables of type {type(obs).__name__}")
    for key, val in extra.items():
        payload[f"meta_{key}"] = np.asarray(val)
    path = Path(path)
    with open(path, "wb") as fh:
        np.savez(fh, **payload)
    return path


def load_model(path) -> KoopmanModel:
    with np.load(path, allow_pickle=False) as f:
        version = int(f["format_version"])
        if version != FORMAT_VERSION:
            raise IoError(f"{path}: unsupported model format version {version}")
        kind = str(f["kind"])
        n_x = int(f["n_x"])
        K, C = f["K"], f["C"]
        if kind == "gp":
            X0 = f["train_inputs"]
            Z = f["virtual_targets"]
            H = f["hyperparams"]
            obs: Sequence | object = [
                GPObservable(X0, Z[i], KernelHyperparams.from_vector(H[i]))
                for i in range(Z.shape[0])
            ]
        elif kind == "poly":
            obs = PolyDictionary(int(f["degree"]), n_x)
        elif kind == "rbf":
            obs = RbfDictionary(f["centers"], bool(f["include_state"]), bool(f["include_constant"]))
        else:
            raise IoError(f"{path}: unknown model kind {kind!r}")
    return KoopmanModel(K, C, obs)
