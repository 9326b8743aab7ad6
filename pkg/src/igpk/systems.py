"""Benchmark dynamical systems and trajectory dataset generation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NonFiniteTrajectory

__all__ = [
    "NoiseSpec",
    "PredatorPreyParams",
    "System",
    "TrajectoryDataset",
    "add_noise",
    "get_system",
    "predator_prey_rhs",
    "rk4_step",
    "sample_initial_conditions",
    "scalar_map_step",
    "simulate",
]


def scalar_map_step(x):
    """``x+ = -x + 3 / (1 + x^2) + 0.5 sin(2x)``; works elementwise on arrays."""
    return -x + 3.0 / (1.0 + x * x) + 0.5 * np.sin(2.0 * x)


@dataclass(frozen=True)
class PredatorPreyParams:
    r: float = 1.0
    K_cap: float = 5.0
    a: float = 1.0
    h: float = 1.0
    n: float = 2.0
    eta: float = 0.5
    d: float = 0.3

    def __post_init__(self):
        for name in ("r", "K_cap", "a", "h", "n", "eta", "d"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def predator_prey_rhs(state, params: PredatorPreyParams = PredatorPreyParams()):
    """Prey ``P`` / predator ``Q`` rates with inhibited (type-IV style) predation."""
    P, Q = state[0], state[1]
    predation = params.a * P**2 / (1.0 + params.h * P**params.n) * Q
    dP = params.r * P * (1.0 - P / params.K_cap) - predation
    dQ = params.eta * predation - params.d * Q
    return np.array([dP, dQ])


def rk4_step(rhs, state, dt):
    if not dt > 0:
        raise ValueError("dt must be positive")
    k1 = rhs(state)
    k2 = rhs(state + 0.5 * dt * k1)
    k3 = rhs(state + 0.5 * dt * k2)
    k4 = rhs(state + dt * k3)
    return state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass(frozen=True)
class System:
    """A named discrete-time map or continuous vector field."""

    name: str
    n_x: int
    step_map: object = None
    rhs: object = None

    @property
    def continuous(self):
        return self.rhs is not None

    def step(self, state, dt=None):
        if self.continuous:
            return rk4_step(self.rhs, state, dt)
        return self.step_map(state)


def _pp_rhs_vec(S, params=PredatorPreyParams()):
    # states stacked as rows of S (n, 2)
    return predator_prey_rhs(S.T, params).T


SYSTEMS = {
    "scalar": System("scalar", 1, step_map=scalar_map_step),
    "predator_prey": System("predator_prey", 2, rhs=_pp_rhs_vec),
}


def get_system(name) -> System:
    try:
        return SYSTEMS[name]
    except KeyError:
        raise ValueError(f"unknown system {name!r}; choose from {sorted(SYSTEMS)}") from None


@dataclass(frozen=True, eq=False)
class TrajectoryDataset:
    """Snapshot matrices for ``n_T`` trajectories of ``N`` transitions each.

    Built from a ``(n_T, N+1, n_x)`` snapshot array, so ``X0``, ``X`` and
    ``XPlus`` always share the same underlying snapshot values. Column
    ``j*N + k`` of ``X`` is step ``k`` of trajectory ``j``.
    """

    snapshots: np.ndarray
    dt: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        S = np.asarray(self.snapshots, dtype=np.float64)
        if S.ndim != 3 or S.shape[1] < 2:
            raise DimensionMismatch("snapshots must have shape (n_T, N+1, n_x) with N >= 1")
        S = S.copy()
        S.setflags(write=False)
        object.__setattr__(self, "snapshots", S)

    @property
    def n_T(self):
        return self.snapshots.shape[0]

    @property
    def N(self):
        return self.snapshots.shape[1] - 1

    @property
    def n_x(self):
        return self.snapshots.shape[2]

    @property
    def X0(self):
        return np.ascontiguousarray(self.snapshots[:, 0, :].T)

    @property
    def X(self):
        return np.ascontiguousarray(self.snapshots[:, :-1, :].reshape(-1, self.n_x).T)

    @property
    def XPlus(self):
        return np.ascontiguousarray(self.snapshots[:, 1:, :].reshape(-1, self.n_x).T)

    def trajectory(self, j):
        """Trajectory ``j`` as an ``(N+1, n_x)`` array."""
        return self.snapshots[j]

    def subset(self, idx):
        return TrajectoryDataset(self.snapshots[np.asarray(idx)], self.dt, dict(self.meta))

    @classmethod
    def from_matrices(cls, X0, X, XPlus, N, dt=None, meta=None):
        """Rebuild from ``X0, X, XPlus``; checks the shared-snapshot layout."""
        X0, X, XPlus = (np.asarray(a, dtype=np.float64) for a in (X0, X, XPlus))
        n_x, n_T = X0.shape
        if X.shape != (n_x, n_T * N) or XPlus.shape != X.shape:
            raise DimensionMismatch("X and XPlus must be n_x x (N n_T)")
        Xb = X.T.reshape(n_T, N, n_x)
        Pb = XPlus.T.reshape(n_T, N, n_x)
        if not np.array_equal(Xb[:, 0, :], X0.T):
            raise DimensionMismatch("first column of each X block must equal X0")
        if not np.array_equal(Xb[:, 1:, :], Pb[:, :-1, :]):
            raise DimensionMismatch("XPlus must be X shifted by one step")
        S = np.concatenate([Xb, Pb[:, -1:, :]], axis=1)
        return cls(S, dt, dict(meta or {}))


def sample_initial_conditions(bounds, n_T, seed):
    """Uniform i.i.d. initial conditions as an ``(n_x, n_T)`` matrix."""
    b = np.asarray(bounds, dtype=np.float64).reshape(-1, 2)
    if np.any(b[:, 0] > b[:, 1]):
        raise ValueError("each bound needs lo <= hi")
    rng = np.random.default_rng(seed)
    u = rng.random((b.shape[0], n_T))
    return b[:, :1] + (b[:, 1:] - b[:, :1]) * u


def simulate(system, X0_cols, N, dt=None) -> TrajectoryDataset:
    """Roll every column of ``X0_cols`` forward ``N`` steps."""
    if isinstance(system, str):
        system = get_system(system)
    X0 = np.atleast_2d(np.asarray(X0_cols, dtype=np.float64))
    if X0.shape[0] != system.n_x:
        raise DimensionMismatch(f"{system.name} expects {system.n_x} state rows")
    if system.continuous and (dt is None or not dt > 0):
        raise ValueError("continuous systems need dt > 0")
    n_T = X0.shape[1]
    S = np.empty((n_T, N + 1, system.n_x))
    S[:, 0, :] = X0.T
    state = X0.T.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, N + 1):
            state = system.step(state, dt)
            S[:, k, :] = state
    if not np.all(np.isfinite(S)):
        bad = np.unique(np.nonzero(~np.isfinite(S))[0])
        raise NonFiniteTrajectory(f"trajectories {bad.tolist()} left the finite range")
    return TrajectoryDataset(S, dt if system.continuous else None, {"system": system.name})


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "none"
    intensity_pct: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("none", "gaussian", "uniform"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.intensity_pct < 0:
            raise ValueError("intensity_pct must be non-negative")

    @property
    def active(self):
        return self.kind != "none" and self.intensity_pct > 0

    def label(self):
        return "clean" if not self.active else f"{self.kind}_{self.intensity_pct:g}"


def add_noise(data: TrajectoryDataset, spec: NoiseSpec) -> TrajectoryDataset:
    """Corrupt every snapshot once; scale is a percentage of each state's clean std.

    Gaussian and uniform noise are variance matched. Trajectory ``j`` draws
    from its own stream seeded by ``(spec.seed, j)``.
    """
    if not spec.active:
        return data
    s = data.X.std(axis=1)
    sigma = spec.intensity_pct / 100.0 * s
    S = data.snapshots.copy()
    for j in range(data.n_T):
        rng = np.random.default_rng([spec.seed, j])
        shape = S.shape[1:]
        if spec.kind == "gaussian":
            noise = rng.standard_normal(shape) * sigma
        else:
            noise = rng.uniform(-1.0, 1.0, shape) * (np.sqrt(3.0) * sigma)
        S[j] += noise
    meta = dict(data.meta, noise=spec.label())
    return TrajectoryDataset(S, data.dt, meta)
