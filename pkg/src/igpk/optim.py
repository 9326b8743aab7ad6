"""Momentum SGD and Adam as pure step functions over flat parameter vectors."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionMismatch

__all__ = ["AdamState", "SgdState", "adam_step", "clip_grad_norm", "sgd_step"]


@dataclass(frozen=True)
class SgdState:
    velocity: np.ndarray
    lr: float = 1e-2
    momentum: float = 0.9

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")

    @classmethod
    def zeros(cls, n, **kw):
        return cls(np.zeros(n), **kw)


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if np.shape(self.m) != np.shape(self.v):
            raise DimensionMismatch("Adam moment vectors differ in shape")
        if self.t < 0:
            raise ValueError("step count must be non-negative")

    @classmethod
    def zeros(cls, n, **kw):
        return cls(np.zeros(n), np.zeros(n), **kw)


def _check(params, grad, ref):
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != grad.shape or params.shape != np.shape(ref):
        raise DimensionMismatch(
            f"params {params.shape}, grad {grad.shape}, state {np.shape(ref)}"
        )
    return params, grad


def sgd_step(params, grad, state: SgdState):
    """Sutskever-style momentum step: ``v <- mu v - lr g``; ``p <- p + v``."""
    params, grad = _check(params, grad, state.velocity)
    velocity = state.momentum * state.velocity - state.lr * grad
    return params + velocity, replace(state, velocity=velocity)


def adam_step(params, grad, state: AdamState):
    """Bias-corrected Adam update (Kingma & Ba)."""
    params, grad = _check(params, grad, state.m)
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new, replace(state, m=m, v=v, t=t)


def clip_grad_norm(grad, max_norm):
    """Rescale ``grad`` so its Euclidean norm is at most ``max_norm``."""
    grad = np.asarray(grad, dtype=np.float64)
    if max_norm is None:
        return grad
    norm = float(np.linalg.norm(grad))
    if norm > max_norm:
        return grad * (max_norm / norm)
    return grad
