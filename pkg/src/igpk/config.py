"""Experiment configuration: YAML schema, protocol defaults and validation.

Schema (all keys optional; unset keys take the system protocol defaults)::

    system: scalar | predator_prey
    seed: 0
    output: out                  # overridden by --out, then $IGPK_OUTPUT_DIR
    data:
      n_traj: 50
      n_steps: 50
      n_train: 30
      bounds: [[-5, 5]]
      dt: null                   # required for continuous systems
      noise: {kind: none, intensity_pct: 0}
    model:
      kind: igpk | poly_edmd | rbf_edmd
      degree: 4                  # poly_edmd
      n_centers: 20              # rbf_edmd
      ...                        # igpk: any IgpkConfig field
    evaluate:
      levels: [0.1, 0.2, ..., 0.9]
      nlpd_jitter: 1.0e-9
      cumulative_full_range: false
      plots: false
"""
from __future__ import annotations

import dataclasses
import zlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from .errors import InvalidConfig
from .systems import SYSTEMS, NoiseSpec
from .training import IgpkConfig

__all__ = [
    "DataProtocol",
    "EvalSettings",
    "ExperimentConfig",
    "ModelSpec",
    "PROTOCOLS",
    "derive_seed",
    "load_config",
    "parse_config",
]

MODEL_KINDS = ("igpk", "poly_edmd", "rbf_edmd")


def derive_seed(seed, *tags) -> int:
    """Independent child seed for a named purpose (stable across runs and platforms)."""
    words = [int(seed)] + [zlib.crc32(str(t).encode()) for t in tags]
    return int(np.random.SeedSequence(words).generate_state(1)[0])


@dataclass(frozen=True)
class DataProtocol:
    n_traj: int
    n_steps: int
    n_train: int
    bounds: tuple
    dt: float | None = None
    noise: NoiseSpec = NoiseSpec()

    @property
    def n_test(self):
        return self.n_traj - self.n_train


@dataclass(frozen=True)
class ModelSpec:
    kind: str = "igpk"
    degree: int = 4
    n_centers: int = 20
    igpk: IgpkConfig = IgpkConfig()

    @property
    def label(self):
        return self.kind


@dataclass(frozen=True)
class EvalSettings:
    levels: tuple = tuple(round(0.1 * k, 1) for k in range(1, 10))
    nlpd_jitter: float = 1e-9
    cumulative_full_range: bool = False
    plots: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    system: str = "scalar"
    seed: int = 0
    output: str = "out"
    data: DataProtocol = None
    model: ModelSpec = field(default_factory=ModelSpec)
    evaluate: EvalSettings = field(default_factory=EvalSettings)

    def with_seed(self, seed):
        return replace(self, seed=int(seed))

    def with_noise(self, noise: NoiseSpec):
        return replace(self, data=replace(self.data, noise=noise))

    def with_model(self, model: ModelSpec):
        return replace(self, model=model)


PROTOCOLS = {
    "scalar": DataProtocol(n_traj=50, n_steps=50, n_train=30, bounds=((-5.0, 5.0),)),
    "predator_prey": DataProtocol(
        n_traj=200, n_steps=100, n_train=80, bounds=((0.1, 4.0), (0.1, 3.0)), dt=0.2
    ),
}

# Per-system iGPK settings used when the config does not override them.
# Stage one needs a much larger step than the optimizer default: the reduced
# cost is O(1e-3) with gradients of the same order, so lr = 1e-2 barely moves Z.
IGPK_DEFAULTS = {
    "scalar": IgpkConfig(n_z=20, stage1_iters=2000, sgd_lr=1.0, init_lengthscale_scale=0.35),
    "predator_prey": IgpkConfig(n_z=20, stage1_iters=3000, sgd_lr=1.0),
}


def default_config(system="scalar", kind="igpk") -> ExperimentConfig:
    return ExperimentConfig(
        system=system,
        data=PROTOCOLS[system],
        model=ModelSpec(kind=kind, igpk=IGPK_DEFAULTS[system]),
    )


# -- validation helpers ------------------------------------------------------

class _Checker:
    def __init__(self, source):
        self.source = source
        self.errors = []

    def fail(self, path, msg):
        self.errors.append(f"{self.source}: {path}: {msg}")

    def mapping(self, obj, path, allowed):
        if obj is None:
            return {}
        if not isinstance(obj, dict):
            self.fail(path, "expected a mapping")
            return {}
        for key in obj:
            if key not in allowed:
                self.fail(f"{path}.{key}" if path else key, "unknown key")
        return obj

    def integer(self, obj, key, path, default, minimum=None):
        if key not in obj:
            return default
        v = obj[key]
        if isinstance(v, bool) or not isinstance(v, int):
            self.fail(f"{path}.{key}", f"expected an integer, got {v!r}")
            return default
        if minimum is not None and v < minimum:
            self.fail(f"{path}.{key}", f"must be >= {minimum}")
        return v

    def real(self, obj, key, path, default, positive=False, nonneg=False, allow_none=False):
        if key not in obj:
            return default
        v = obj[key]
        if v is None and allow_none:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not np.isfinite(v):
            self.fail(f"{path}.{key}", f"expected a finite number, got {v!r}")
            return default
        if positive and not v > 0:
            self.fail(f"{path}.{key}", "must be positive")
        if nonneg and v < 0:
            self.fail(f"{path}.{key}", "must be non-negative")
        return float(v)

    def boolean(self, obj, key, path, default):
        if key not in obj:
            return default
        v = obj[key]
        if not isinstance(v, bool):
            self.fail(f"{path}.{key}", f"expected true/false, got {v!r}")
            return default
        return v


def _parse_noise(ck, raw, default: NoiseSpec):
    raw = ck.mapping(raw, "data.noise", {"kind", "intensity_pct"})
    kind = raw.get("kind", default.kind)
    if kind not in ("none", "gaussian", "uniform"):
        ck.fail("data.noise.kind", f"must be none, gaussian or uniform, got {kind!r}")
        kind = default.kind
    pct = ck.real(raw, "intensity_pct", "data.noise", default.intensity_pct, nonneg=True)
    return NoiseSpec(kind, pct, 0)


def _parse_data(ck, raw, base: DataProtocol, continuous: bool, n_x: int):
    allowed = {"n_traj", "n_steps", "n_train", "bounds", "dt", "noise"}
    raw = ck.mapping(raw, "data", allowed)
    n_traj = ck.integer(raw, "n_traj", "data", base.n_traj, minimum=2)
    n_steps = ck.integer(raw, "n_steps", "data", base.n_steps, minimum=1)
    n_train = ck.integer(raw, "n_train", "data", base.n_train, minimum=1)
    if n_train >= n_traj:
        ck.fail("data.n_train", f"must be smaller than n_traj ({n_traj}) to leave a test split")
    bounds = base.bounds
    if "bounds" in raw:
        try:
            b = np.asarray(raw["bounds"], dtype=np.float64).reshape(-1, 2)
        except (TypeError, ValueError):
            ck.fail("data.bounds", "expected a list of [lo, hi] pairs")
        else:
            if b.shape[0] != n_x:
                ck.fail("data.bounds", f"need {n_x} [lo, hi] pairs for this system")
            elif np.any(b[:, 0] > b[:, 1]) or not np.all(np.isfinite(b)):
                ck.fail("data.bounds", "each pair needs finite lo <= hi")
            else:
                bounds = tuple(tuple(map(float, row)) for row in b)
    dt = ck.real(raw, "dt", "data", base.dt, positive=True, allow_none=True)
    if continuous and dt is None:
        ck.fail("data.dt", "continuous systems need a positive dt")
    if not continuous:
        dt = None
    noise = _parse_noise(ck, raw.get("noise"), base.noise)
    return DataProtocol(n_traj, n_steps, n_train, bounds, dt, noise)


_IGPK_FIELDS = {f.name: f for f in fields(IgpkConfig)}


def _parse_model(ck, raw, system):
    allowed = {"kind", "degree", "n_centers"} | set(_IGPK_FIELDS)
    raw = ck.mapping(raw, "model", allowed)
    kind = raw.get("kind", "igpk")
    if kind not in MODEL_KINDS:
        ck.fail("model.kind", f"must be one of {', '.join(MODEL_KINDS)}, got {kind!r}")
        kind = "igpk"
    degree = ck.integer(raw, "degree", "model", 4, minimum=1)
    n_centers = ck.integer(raw, "n_centers", "model", 20, minimum=1)
    base = IGPK_DEFAULTS[system]
    overrides = {}
    for name, f in _IGPK_FIELDS.items():
        if name not in raw:
            continue
        default = getattr(base, name)
        if name == "batch_size" or name == "grad_clip":
            v = raw[name]
            if v is None:
                overrides[name] = None
            elif name == "batch_size":
                overrides[name] = ck.integer(raw, name, "model", default, minimum=1)
            else:
                overrides[name] = ck.real(raw, name, "model", default, positive=True)
        elif isinstance(default, str):
            v = raw[name]
            if v not in ("prior", "normal"):
                ck.fail(f"model.{name}", f"must be 'prior' or 'normal', got {v!r}")
            else:
                overrides[name] = v
        elif isinstance(default, bool):
            overrides[name] = ck.boolean(raw, name, "model", default)
        elif isinstance(default, int):
            overrides[name] = ck.integer(raw, name, "model", default, minimum=0)
        else:
            overrides[name] = ck.real(raw, name, "model", default, nonneg=True)
    try:
        igpk = replace(base, **overrides)
    except ValueError as exc:
        ck.fail("model", str(exc))
        igpk = base
    return ModelSpec(kind, degree, n_centers, igpk)


def _parse_eval(ck, raw):
    allowed = {"levels", "nlpd_jitter", "cumulative_full_range", "plots"}
    raw = ck.mapping(raw, "evaluate", allowed)
    base = EvalSettings()
    levels = base.levels
    if "levels" in raw:
        try:
            lv = np.asarray(raw["levels"], dtype=np.float64).ravel()
        except (TypeError, ValueError):
            ck.fail("evaluate.levels", "expected a list of numbers")
        else:
            if lv.size == 0 or np.any((lv <= 0) | (lv >= 1)):
                ck.fail("evaluate.levels", "levels must lie strictly between 0 and 1")
            else:
                levels = tuple(float(v) for v in lv)
    jitter = ck.real(raw, "nlpd_jitter", "evaluate", base.nlpd_jitter, positive=True)
    full = ck.boolean(raw, "cumulative_full_range", "evaluate", base.cumulative_full_range)
    plots = ck.boolean(raw, "plots", "evaluate", base.plots)
    return EvalSettings(levels, jitter, full, plots)


def parse_config(raw, source="<config>") -> ExperimentConfig:
    """Validate a parsed mapping; every problem is reported at once."""
    ck = _Checker(source)
    raw = ck.mapping(raw, "", {"system", "seed", "output", "data", "model", "evaluate"})
    system = raw.get("system", "scalar")
    if system not in SYSTEMS:
        ck.fail("system", f"must be one of {', '.join(sorted(SYSTEMS))}, got {system!r}")
        system = "scalar"
    sysobj = SYSTEMS[system]
    seed = ck.integer(raw, "seed", "", 0)
    output = raw.get("output", "out")
    if not isinstance(output, str):
        ck.fail("output", "expected a path string")
        output = "out"
    data = _parse_data(ck, raw.get("data"), PROTOCOLS[system], sysobj.continuous, sysobj.n_x)
    model = _parse_model(ck, raw.get("model"), system)
    if model.kind == "rbf_edmd" and model.n_centers > data.n_train * data.n_steps:
        ck.fail("model.n_centers", "more centers than training snapshots")
    ev = _parse_eval(ck, raw.get("evaluate"))
    if ck.errors:
        raise InvalidConfig("\n".join(ck.errors))
    return ExperimentConfig(system, seed, output, data, model, ev)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    text = path.read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise InvalidConfig(f"{path}: YAML syntax error at {where}: {exc}") from None
    return parse_config(raw or {}, str(path))


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Plain-data form suitable for YAML/JSON round trips."""
    d = dataclasses.asdict(cfg)
    d["data"]["bounds"] = [list(b) for b in cfg.data.bounds]
    d["data"]["noise"] = {"kind": cfg.data.noise.kind, "intensity_pct": cfg.data.noise.intensity_pct}
    model = {"kind": cfg.model.kind, "degree": cfg.model.degree, "n_centers": cfg.model.n_centers}
    model.update(dataclasses.asdict(cfg.model.igpk))
    d["model"] = model
    d["evaluate"]["levels"] = list(cfg.evaluate.levels)
    return d
