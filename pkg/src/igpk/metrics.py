"""Trajectory error, predictive density and calibration metrics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DegenerateRange, DimensionMismatch, EmptyInput, NotSpd

__all__ = [
    "RolloutPrediction",
    "calibration_curve",
    "cumulative_nrmse_pct",
    "mean_abs_calibration_error",
    "nlpd",
    "nrmse_pct",
    "nrmse_pct_per_dim",
    "summarize",
]

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True, eq=False)
class RolloutPrediction:
    means: np.ndarray
    covs: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.means, dtype=np.float64)
        if m.ndim == 1:
            m = m[:, None]
        c = np.asarray(self.covs, dtype=np.float64)
        if c.ndim == 1:
            c = c[:, None, None]
        if c.shape != (m.shape[0], m.shape[1], m.shape[1]):
            raise DimensionMismatch(f"covs shape {c.shape} does not match means {m.shape}")
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "covs", c)

    @property
    def has_covariance(self):
        return bool(np.any(self.covs != 0))


def _traj(a, name):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise DimensionMismatch(f"{name} must be (steps, n_x)")
    return a


def _pair(truth, pred):
    truth = _traj(truth, "truth")
    pred = _traj(pred, "pred")
    if truth.shape != pred.shape:
        raise DimensionMismatch(f"truth {truth.shape} vs prediction {pred.shape}")
    if truth.shape[0] < 2:
        raise ValueError("need at least two time steps")
    return truth, pred


def nrmse_pct(truth, pred_means) -> float:
    """RMS of the state-error norm over all steps, over the truth's value range, in percent.

    The range is taken over every entry of the ground-truth trajectory, i.e.
    ``max(x) - min(x)`` across steps and state components.
    """
    truth, pred = _pair(truth, pred_means)
    rng = float(truth.max() - truth.min())
    if not rng > 0:
        raise DegenerateRange("ground-truth trajectory has zero range")
    rmse = np.sqrt(np.mean(np.sum((truth - pred) ** 2, axis=1)))
    return 100.0 * rmse / rng


def nrmse_pct_per_dim(truth, pred_means) -> np.ndarray:
    """Per-component NRMSE %, each normalized by its own range (NaN if flat)."""
    truth, pred = _pair(truth, pred_means)
    rng = truth.max(axis=0) - truth.min(axis=0)
    rmse = np.sqrt(np.mean((truth - pred) ** 2, axis=0))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(rng > 0, 100.0 * rmse / rng, np.nan)


def cumulative_nrmse_pct(truth, pred_means, full_range=False) -> np.ndarray:
    """NRMSE % of the prefix ``0..k`` for every ``k``.

    By default the range is that of the same prefix; ``full_range`` uses the
    whole trajectory's range. Entries with a zero range are NaN.
    """
    truth, pred = _pair(truth, pred_means)
    err2 = np.sum((truth - pred) ** 2, axis=1)
    rmse = np.sqrt(np.cumsum(err2) / np.arange(1, err2.size + 1))
    if full_range:
        rng = np.full(err2.size, truth.max() - truth.min())
    else:
        rng = np.maximum.accumulate(truth.max(axis=1)) - np.minimum.accumulate(truth.min(axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(rng > 0, 100.0 * rmse / rng, np.nan)


def nlpd(truth, pred: RolloutPrediction, jitter: float = 1e-9) -> float:
    """Average negative log Gaussian density of the truth along the rollout."""
    truth = _traj(truth, "truth")
    if truth.shape != pred.means.shape:
        raise DimensionMismatch(f"truth {truth.shape} vs prediction {pred.means.shape}")
    n_x = truth.shape[1]
    total = 0.0
    for x, mu, V in zip(truth, pred.means, pred.covs):
        Vj = 0.5 * (V + V.T) + jitter * np.eye(n_x)
        try:
            L = np.linalg.cholesky(Vj)
        except np.linalg.LinAlgError:
            raise NotSpd("predictive covariance not positive definite with jitter") from None
        r = np.linalg.solve(L, x - mu)
        logdet = 2.0 * np.sum(np.log(np.diag(L)))
        total += 0.5 * (r @ r + logdet + n_x * _LOG_2PI)
    return total / truth.shape[0]


def calibration_curve(truths, preds, levels):
    """Empirical coverage of central Gaussian intervals at each nominal level.

    Marginal intervals ``mean +- z sqrt(var)`` are checked per component and
    step and pooled over all trajectories. Interval ends count as covered.
    """
    levels = np.asarray(levels, dtype=np.float64)
    if np.any((levels <= 0) | (levels >= 1)):
        raise ValueError("levels must lie strictly between 0 and 1")
    if len(truths) != len(preds):
        raise DimensionMismatch("one prediction per truth trajectory is required")
    if not len(truths):
        raise EmptyInput("no trajectories")
    abs_err, sd = [], []
    for truth, pred in zip(truths, preds):
        truth = _traj(truth, "truth")
        if truth.shape != pred.means.shape:
            raise DimensionMismatch("truth and prediction shapes differ")
        abs_err.append(np.abs(truth - pred.means).ravel())
        var = np.diagonal(pred.covs, axis1=1, axis2=2)
        sd.append(np.sqrt(np.maximum(var, 0.0)).ravel())
    abs_err = np.concatenate(abs_err)
    sd = np.concatenate(sd)
    zs = stats.norm.ppf(0.5 * (1.0 + levels))
    return [(float(p), float(np.mean(abs_err <= z * sd))) for p, z in zip(levels, zs)]


def mean_abs_calibration_error(curve) -> float:
    return float(np.mean([abs(e - p) for p, e in curve]))


def summarize(values):
    """Mean and sample standard deviation (0 for a single value)."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise EmptyInput("cannot summarize an empty set")
    mean = float(np.mean(v))
    std = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
    return mean, std
