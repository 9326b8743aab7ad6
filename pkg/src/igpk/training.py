"""Inverted-GP Koopman learning: virtual targets as decision variables.

Each lifted coordinate ``i`` is the posterior mean of a GP trained on
``(X0, Z[i])``. For fixed hyperparameters the lifted data matrices are linear
in ``Z``: ``Phi[i] = A_i @ Z[i]`` with ``A_i = K(X, X0)(K(X0, X0) + s2 I)^{-1}``.
Stage one minimizes the variable-projection cost over ``Z`` with momentum SGD;
stage two fits each GP's hyperparameters to its optimized targets with Adam;
``K`` and ``C`` then come from an exact pseudo-inverse fit.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import DimensionMismatch, NotSpd, TrainingDiverged
from .gp import GPObservable, mean_operator, nlml_and_grad
from .kernels import KernelHyperparams, gram
from .koopman import KoopmanModel, edmd_fit
from .numerics import as_matrix, cholesky_factor
from .optim import AdamState, SgdState, adam_step, clip_grad_norm, sgd_step
from .systems import TrajectoryDataset

__all__ = [
    "IgpkConfig",
    "IgpkResult",
    "build_lifted_matrices",
    "guard_hyperparameters",
    "init_hyperparams",
    "init_virtual_targets",
    "l1_cost",
    "l1_cost_and_grad",
    "l1_grad_z",
    "optimize_hyperparameters",
    "optimize_virtual_targets",
    "train_igpk",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class IgpkConfig:
    n_z: int = 10
    stage1_iters: int = 2000
    stage2_iters: int = 500
    ridge_lambda: float = 1e-8
    seed: int = 0
    batch_size: int | None = None
    sgd_lr: float = 1e-2
    sgd_momentum: float = 0.9
    adam_lr: float = 1e-2
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip: float | None = 1e3
    warm_start: bool = False
    init_noise_var: float = 1e-2
    init_perturbation: float = 0.1
    init_lengthscale_scale: float = 1.0
    z_init: str = "prior"
    stage2_guard: bool = True

    def __post_init__(self):
        if self.n_z < 1:
            raise ValueError("n_z must be positive")
        if self.stage1_iters < 0 or self.stage2_iters < 0:
            raise ValueError("iteration counts must be non-negative")
        if not self.ridge_lambda > 0:
            raise ValueError("ridge_lambda must be positive")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be positive or None for full batch")
        if not self.init_lengthscale_scale > 0:
            raise ValueError("init_lengthscale_scale must be positive")
        if self.z_init not in ("prior", "normal"):
            raise ValueError("z_init must be 'prior' or 'normal'")


# -- lifted matrices ---------------------------------------------------------

class LiftOperators:
    """Per-GPO linear maps from virtual targets to lifted snapshot values.

    The columns of ``X`` and ``XPlus`` usually share most snapshots, so the
    maps are built on the unique columns and indexed.
    """

    def __init__(self, Theta, X0, X, XPlus):
        X0 = as_matrix(X0, "X0")
        X = as_matrix(X, "X")
        XPlus = as_matrix(XPlus, "XPlus")
        if X.shape != XPlus.shape or X.shape[0] != X0.shape[0]:
            raise DimensionMismatch("X, XPlus and X0 must share n_x; X and XPlus equal shape")
        both = np.hstack([X, XPlus])
        uniq, inverse = np.unique(both, axis=1, return_inverse=True)
        inverse = inverse.reshape(-1)
        self.idx = inverse[: X.shape[1]]
        self.idx_plus = inverse[X.shape[1]:]
        self.n_T = X0.shape[1]
        self.M = X.shape[1]
        self.A = np.stack([mean_operator(th, X0, uniq) for th in Theta])

    @property
    def n_z(self):
        return self.A.shape[0]

    def lifted(self, Z):
        Zm = np.asarray(Z, dtype=np.float64)
        if Zm.shape != (self.n_z, self.n_T):
            raise DimensionMismatch(f"Z must be {self.n_z}x{self.n_T}, got {Zm.shape}")
        Phi_u = np.einsum("iut,it->iu", self.A, Zm)
        return Phi_u[:, self.idx], Phi_u[:, self.idx_plus]

    def pullback(self, dPhi, dPhiPlus):
        """Gradient w.r.t. ``Z`` given gradients w.r.t. ``Phi`` and ``PhiPlus``."""
        d_u = np.zeros((self.n_z, self.A.shape[1]))
        np.add.at(d_u.T, self.idx, dPhi.T)
        np.add.at(d_u.T, self.idx_plus, dPhiPlus.T)
        return np.einsum("iut,iu->it", self.A, d_u)


def build_lifted_matrices(Z, Theta, X0, X, XPlus):
    """``Phi`` and ``PhiPlus``: GP posterior means of every observable at X and X+."""
    return LiftOperators(Theta, X0, X, XPlus).lifted(Z)


# -- reduced cost -------------------------------------------------------------

def _ridge_pieces(Phi, lam):
    n_z, M = Phi.shape
    U, s, Vt = linalg.svd(Phi, full_matrices=n_z > M, check_finite=False)
    if n_z > M:
        s = np.concatenate([s, np.zeros(n_z - M)])
        Vt = np.vstack([Vt, np.zeros((n_z - M, M))])
    Ginv = (U / (s**2 + lam)) @ U.T
    return U, s, Vt, Ginv


def _fit_term(Y, Phi, pieces, lam, need_grad):
    """``||Y - Y Phi^T G^{-1} Phi||^2`` with ``G = Phi Phi^T + lam I`` and its gradients."""
    U, s, Vt, Ginv = pieces
    Mfit = ((Y @ Vt.T) * (s / (s**2 + lam))) @ U.T
    R = Y - Mfit @ Phi
    f = float(np.sum(R * R))
    if not need_grad:
        return f, None, None
    # R Phi^T = lam Mfit holds exactly; using it avoids cancellation
    W = lam * (Mfit @ Ginv)
    H = Mfit.T @ W
    dY = 2.0 * (R - W @ Phi)
    dPhi = 2.0 * (-Mfit.T @ R - W.T @ Y + (H + H.T) @ Phi)
    return f, dY, dPhi


def _l1_from_lifted(Phi, PhiPlus, X, lam, need_grad=True):
    n_z, M = Phi.shape
    scale = 1.0 / (n_z * M)
    pieces = _ridge_pieces(Phi, lam)
    f1, dY1, dPhi1 = _fit_term(PhiPlus, Phi, pieces, lam, need_grad)
    f2, _, dPhi2 = _fit_term(X, Phi, pieces, lam, need_grad)
    cost = scale * (f1 + f2)
    if not need_grad:
        return cost, None, None
    return cost, scale * (dPhi1 + dPhi2), scale * dY1


def _dataset_arrays(data):
    if isinstance(data, TrajectoryDataset):
        return data.X0, data.X, data.XPlus
    X0, X, XPlus = data
    return as_matrix(X0, "X0"), as_matrix(X, "X"), as_matrix(XPlus, "XPlus")


def l1_cost(Z, Theta, data, ridge_lambda=1e-8) -> float:
    """Normalized reduced cost ``(||Phi+ - K Phi||^2 + ||X - C Phi||^2) / (n_z N n_T)``.

    ``K`` and ``C`` are the ridge fits for the current ``Phi``.
    ``data`` is a :class:`TrajectoryDataset` or a tuple ``(X0, X, XPlus)``.
    """
    X0, X, XPlus = _dataset_arrays(data)
    Phi, PhiPlus = build_lifted_matrices(Z, Theta, X0, X, XPlus)
    return _l1_from_lifted(Phi, PhiPlus, X, ridge_lambda, need_grad=False)[0]


def l1_cost_and_grad(Z, Theta, data, ridge_lambda=1e-8, ops=None):
    X0, X, XPlus = _dataset_arrays(data)
    ops = ops or LiftOperators(Theta, X0, X, XPlus)
    Phi, PhiPlus = ops.lifted(Z)
    cost, dPhi, dPhiPlus = _l1_from_lifted(Phi, PhiPlus, X, ridge_lambda)
    return cost, ops.pullback(dPhi, dPhiPlus)


def l1_grad_z(Z, Theta, data, ridge_lambda=1e-8) -> np.ndarray:
    """Exact gradient of :func:`l1_cost` with respect to ``Z`` (shape ``n_z x n_T``)."""
    return l1_cost_and_grad(Z, Theta, data, ridge_lambda)[1]


# -- initialization -------------------------------------------------------------

def _rngs(seed):
    ss = np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(3)]


def init_hyperparams(config: IgpkConfig, X0):
    """Per-GPO hyperparameters: data-std lengthscales, unit signal, small noise.

    Lengthscale anchors are the per-dimension std of ``X0`` times
    ``config.init_lengthscale_scale``. Each anchor gets an independent uniform
    log-space perturbation of ``config.init_perturbation``.
    """
    X0 = as_matrix(X0, "X0")
    std = X0.std(axis=1)
    std = np.where(std > 0, std, 1.0) * config.init_lengthscale_scale
    rng = _rngs(config.seed)[1]
    base = np.concatenate([np.log(std), [0.0, np.log(config.init_noise_var)]])
    eps = config.init_perturbation
    return [
        KernelHyperparams.from_vector(base + rng.uniform(-eps, eps, base.size))
        for _ in range(config.n_z)
    ]


def init_virtual_targets(config: IgpkConfig, X0, Theta=None):
    """Random starting targets, one row per GPO.

    ``z_init="normal"`` draws i.i.d. standard normals. ``z_init="prior"``
    (default) colours the same draws with the Cholesky factor of each GPO's
    prior covariance ``K_i(X0, X0) + jitter I``, so every row starts as a
    sample of a smooth function at the initial conditions. White-noise
    targets make stage two fit very short lengthscales; prior samples avoid
    that. With ``warm_start`` the first ``n_x`` rows are replaced by ``X0``.
    """
    X0 = as_matrix(X0, "X0")
    Z = _rngs(config.seed)[0].standard_normal((config.n_z, X0.shape[1]))
    if config.z_init == "prior":
        if Theta is None:
            Theta = init_hyperparams(config, X0)
        for i, th in enumerate(Theta):
            L, _ = cholesky_factor(gram(X0, X0, th))
            Z[i] = L @ Z[i]
    if config.warm_start:
        k = min(X0.shape[0], config.n_z)
        Z[:k] = X0[:k]
    return Z


# -- stage 1 ----------------------------------------------------------------

@dataclass
class StageTrace:
    cost: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    wall_time: list = field(default_factory=list)


def optimize_virtual_targets(config: IgpkConfig, Theta, data, Z_init=None):
    """Momentum SGD on the reduced cost with ``Theta`` held fixed.

    Returns the best-cost iterate (the initialization included) and a trace
    with the full-data cost of every iterate ``0..stage1_iters``.
    """
    X0, X, XPlus = _dataset_arrays(data)
    if Z_init is None:
        Z = init_virtual_targets(config, X0, Theta)
    else:
        Z = np.array(Z_init, dtype=np.float64)
    ops = LiftOperators(Theta, X0, X, XPlus)
    batch_rng = _rngs(config.seed)[2]
    lam = config.ridge_lambda
    M = X.shape[1]
    mini = config.batch_size is not None and config.batch_size < M

    state = SgdState.zeros(Z.size, lr=config.sgd_lr, momentum=config.sgd_momentum)
    trace = StageTrace()
    best_Z, best_cost = Z.copy(), np.inf
    t0 = time.perf_counter()
    for g in range(config.stage1_iters + 1):
        Phi, PhiPlus = ops.lifted(Z)
        last = g == config.stage1_iters
        full_cost, dPhi, dPhiPlus = _l1_from_lifted(Phi, PhiPlus, X, lam, need_grad=not (mini or last))
        grad = None
        if not last:
            if mini:
                cols = np.sort(batch_rng.choice(M, size=config.batch_size, replace=False))
                _, dPb, dPPb = _l1_from_lifted(Phi[:, cols], PhiPlus[:, cols], X[:, cols], lam)
                dPhi = np.zeros_like(Phi)
                dPhiPlus = np.zeros_like(PhiPlus)
                dPhi[:, cols] = dPb
                dPhiPlus[:, cols] = dPPb
            grad = ops.pullback(dPhi, dPhiPlus)
        gnorm = float(np.linalg.norm(grad)) if grad is not None else float("nan")
        trace.cost.append(full_cost)
        trace.grad_norm.append(gnorm)
        trace.wall_time.append(time.perf_counter() - t0)
        if not np.isfinite(full_cost):
            log.warning("stage 1 cost became non-finite at iteration %d", g)
            break
        if full_cost < best_cost:
            best_cost, best_Z = full_cost, Z.copy()
        if last:
            break
        flat, state = sgd_step(Z.ravel(), clip_grad_norm(grad.ravel(), config.grad_clip), state)
        Z = flat.reshape(Z.shape)
    return best_Z, trace


# -- stage 2 ----------------------------------------------------------------

def _optimize_one(config, theta0, X0, z):
    theta_vec = theta0.to_vector()
    state = AdamState.zeros(theta_vec.size, lr=config.adam_lr, beta1=config.adam_beta1,
                            beta2=config.adam_beta2, eps=config.adam_eps)
    trace = StageTrace()
    best_vec, best_val = theta_vec.copy(), np.inf
    t0 = time.perf_counter()
    for g in range(config.stage2_iters + 1):
        try:
            val, grad = nlml_and_grad(KernelHyperparams.from_vector(theta_vec), X0, z)
        except NotSpd:
            break
        trace.cost.append(val)
        trace.grad_norm.append(float(np.linalg.norm(grad)))
        trace.wall_time.append(time.perf_counter() - t0)
        if not (np.isfinite(val) and np.all(np.isfinite(grad))):
            break
        if val < best_val:
            best_val, best_vec = val, theta_vec.copy()
        if g == config.stage2_iters:
            break
        theta_vec, state = adam_step(theta_vec, clip_grad_norm(grad, config.grad_clip), state)
    return KernelHyperparams.from_vector(best_vec), trace


def optimize_hyperparameters(config: IgpkConfig, Z_star, X0, Theta_init=None, jobs=1):
    """Adam on each GPO's marginal likelihood, independently.

    Returns ``(Theta_star, traces)``; each entry of ``Theta_star`` is the best
    iterate seen for that GPO.
    """
    X0 = as_matrix(X0, "X0")
    Z_star = np.asarray(Z_star, dtype=np.float64)
    Theta_init = Theta_init if Theta_init is not None else init_hyperparams(config, X0)
    args = [(config, Theta_init[i], X0, Z_star[i]) for i in range(Z_star.shape[0])]
    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(jobs) as pool:
            results = list(pool.map(lambda a: _optimize_one(*a), args))
    else:
        results = [_optimize_one(*a) for a in args]
    return [r[0] for r in results], [r[1] for r in results]


def guard_hyperparameters(config: IgpkConfig, Z_star, Theta_init, Theta_fit, data):
    """Keep each fitted ``theta_i`` only if it does not raise the reduced cost.

    The posterior-mean observables depend on the hyperparameters, so a
    likelihood fit can move them away from what stage one optimized ``Z``
    for. GPOs are visited in order; GPO ``i`` switches to ``Theta_fit[i]``
    when the cost with that swap is no larger than the current cost.
    Returns ``(Theta, accepted)``.
    """
    X0, X, XPlus = _dataset_arrays(data)
    lam = config.ridge_lambda
    ops0 = LiftOperators(Theta_init, X0, X, XPlus)
    ops1 = LiftOperators(Theta_fit, X0, X, XPlus)
    Phi0, PhiPlus0 = ops0.lifted(Z_star)
    Phi1, PhiPlus1 = ops1.lifted(Z_star)
    Phi, PhiPlus = Phi0.copy(), PhiPlus0.copy()
    cost = _l1_from_lifted(Phi, PhiPlus, X, lam, need_grad=False)[0]
    Theta = list(Theta_init)
    accepted = np.zeros(len(Theta), dtype=bool)
    for i in range(len(Theta)):
        trial, trial_plus = Phi.copy(), PhiPlus.copy()
        trial[i], trial_plus[i] = Phi1[i], PhiPlus1[i]
        c = _l1_from_lifted(trial, trial_plus, X, lam, need_grad=False)[0]
        if c <= cost:
            Phi, PhiPlus, cost = trial, trial_plus, c
            Theta[i] = Theta_fit[i]
            accepted[i] = True
    return Theta, accepted


# -- full pipeline ------------------------------------------------------------

@dataclass
class IgpkResult:
    model: KoopmanModel
    Z: np.ndarray
    Theta: list
    stage1: StageTrace
    stage2: list
    final_cost: float
    accepted: np.ndarray | None = None

    def log_rows(self):
        """Run-log rows: (stage, gpo, iteration, cost, grad_norm, wall_time)."""
        rows = []
        for g, (c, n, t) in enumerate(zip(self.stage1.cost, self.stage1.grad_norm, self.stage1.wall_time)):
            rows.append(("virtual_targets", -1, g, c, n, t))
        for i, tr in enumerate(self.stage2):
            for g, (c, n, t) in enumerate(zip(tr.cost, tr.grad_norm, tr.wall_time)):
                rows.append(("hyperparameters", i, g, c, n, t))
        return rows


def train_igpk(config: IgpkConfig, data, return_details=False, jobs=1):
    """Run both optimization stages and recover ``K``, ``C`` by exact pseudo-inverse."""
    X0, X, XPlus = _dataset_arrays(data)
    Theta0 = init_hyperparams(config, X0)
    Z_star, trace1 = optimize_virtual_targets(config, Theta0, (X0, X, XPlus))
    Theta_star, traces2 = optimize_hyperparameters(config, Z_star, X0, Theta0, jobs=jobs)
    accepted = None
    if config.stage2_guard:
        Theta_star, accepted = guard_hyperparameters(config, Z_star, Theta0, Theta_star, (X0, X, XPlus))
        log.info("stage 2 kept fitted hyperparameters for %d of %d GPOs", accepted.sum(), accepted.size)
    ops = LiftOperators(Theta_star, X0, X, XPlus)
    Phi, PhiPlus = ops.lifted(Z_star)
    final_cost = _l1_from_lifted(Phi, PhiPlus, X, config.ridge_lambda, need_grad=False)[0]
    if not (np.isfinite(final_cost) and np.all(np.isfinite(Phi)) and np.all(np.isfinite(PhiPlus))):
        raise TrainingDiverged(f"final reduced cost is {final_cost}")
    K, C = edmd_fit(Phi, PhiPlus, X)
    gpos = [GPObservable(X0, Z_star[i], Theta_star[i]) for i in range(config.n_z)]
    model = KoopmanModel(K, C, gpos)
    if return_details:
        return IgpkResult(model, Z_star, Theta_star, trace1, traces2, final_cost, accepted)
    return model
