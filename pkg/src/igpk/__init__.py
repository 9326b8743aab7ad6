"""Probabilistic Koopman models with Gaussian-process observables."""
from .errors import *  # noqa: F401,F403
from .kernels import KernelHyperparams
from .koopman import GaussianState, KoopmanModel, edmd_fit, load_model, propagate, rollout, save_model
from .systems import NoiseSpec, TrajectoryDataset, add_noise, simulate
from .training import IgpkConfig, train_igpk

__version__ = "0.1.0"

__all__ = [
    "GaussianState",
    "IgpkConfig",
    "KernelHyperparams",
    "KoopmanModel",
    "NoiseSpec",
    "TrajectoryDataset",
    "add_noise",
    "edmd_fit",
    "load_model",
    "propagate",
    "rollout",
    "save_model",
    "simulate",
    "train_igpk",
]
