"""Generate -> train -> evaluate orchestration shared by the CLI commands."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, ModelSpec, config_to_dict, default_config, derive_seed
from .data_io import read_dataset, write_csv, write_dataset
from .dictionaries import PolyDictionary, RbfDictionary, kmeans
from .errors import DimensionMismatch, InvalidConfig
from .koopman import KoopmanModel, edmd_fit, load_model, rollout, save_model
from .metrics import (
    RolloutPrediction,
    calibration_curve,
    cumulative_nrmse_pct,
    mean_abs_calibration_error,
    nlpd,
    nrmse_pct,
    nrmse_pct_per_dim,
    summarize,
)
from .systems import NoiseSpec, add_noise, get_system, sample_initial_conditions, simulate
from .training import train_igpk

log = logging.getLogger(__name__)

__all__ = [
    "EvaluationResult",
    "evaluate_model",
    "fit_model",
    "generate_datasets",
    "reproduce",
    "run_cell",
    "write_evaluation",
]


# -- data -----------------------------------------------------------------

def generate_datasets(cfg: ExperimentConfig):
    """Simulate the protocol; noise goes on the training split only."""
    p = cfg.data
    system = get_system(cfg.system)
    X0 = sample_initial_conditions(p.bounds, p.n_traj, derive_seed(cfg.seed, "initial_conditions"))
    full = simulate(system, X0, p.n_steps, p.dt)
    train = full.subset(np.arange(p.n_train))
    test = full.subset(np.arange(p.n_train, p.n_traj))
    noise = replace(p.noise, seed=derive_seed(cfg.seed, "noise"))
    train = add_noise(train, noise)
    meta = {"system": cfg.system, "seed": cfg.seed}
    train = replace(train, meta={**train.meta, **meta, "split": "train", "noise": noise.label()})
    test = replace(test, meta={**test.meta, **meta, "split": "test", "noise": "clean"})
    return train, test


def write_generated(cfg, out_dir):
    train, test = generate_datasets(cfg)
    out = Path(out_dir)
    noise = {"kind": cfg.data.noise.kind, "intensity_pct": cfg.data.noise.intensity_pct}
    write_dataset(out / "train", train, {"noise_spec": noise})
    write_dataset(out / "test", test, {"noise_spec": {"kind": "none", "intensity_pct": 0.0}})
    return out / "train", out / "test"


# -- models ------------------------------------------------------------------

def fit_model(spec: ModelSpec, train, seed=0, jobs=1):
    """Fit one model; returns ``(model, run_log_rows)``."""
    if spec.kind == "poly_edmd":
        obs = PolyDictionary(spec.degree, train.n_x)
    elif spec.kind == "rbf_edmd":
        obs = RbfDictionary(kmeans(train.X, spec.n_centers, derive_seed(seed, "kmeans")))
    elif spec.kind == "igpk":
        icfg = replace(spec.igpk, seed=derive_seed(seed, "igpk", spec.igpk.seed))
        result = train_igpk(icfg, train, return_details=True, jobs=jobs)
        return result.model, result.log_rows()
    else:
        raise InvalidConfig(f"unknown model kind {spec.kind!r}")
    K, C = edmd_fit(obs.lift(train.X), obs.lift(train.XPlus), train.X)
    return KoopmanModel(K, C, obs), []


RUN_LOG_HEADER = ["stage", "gpo", "iteration", "cost", "grad_norm", "wall_time"]


# -- evaluation ------------------------------------------------------------------

@dataclass
class EvaluationResult:
    truths: list
    predictions: list
    nrmse: np.ndarray
    nrmse_dims: np.ndarray
    nlpd: np.ndarray | None
    cumulative: np.ndarray
    calibration: list | None

    @property
    def probabilistic(self):
        return self.nlpd is not None

    def summary(self):
        out = {"nrmse_pct": summarize(self.nrmse)}
        if self.probabilistic:
            out["nlpd"] = summarize(self.nlpd)
        return out


def evaluate_model(model: KoopmanModel, test, settings=None) -> EvaluationResult:
    """Open-loop rollouts from every clean test initial condition."""
    from .config import EvalSettings

    settings = settings or EvalSettings()
    if model.n_x != test.n_x:
        raise DimensionMismatch(f"model has n_x={model.n_x}, dataset has {test.n_x}")
    truths, preds = [], []
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(test.n_T):
            truth = test.trajectory(j)
            means, covs = rollout(model, truth[0], test.N)
            truths.append(truth)
            preds.append(RolloutPrediction(means, covs))
    nr = np.array([nrmse_pct(t, p.means) for t, p in zip(truths, preds)])
    dims = np.array([nrmse_pct_per_dim(t, p.means) for t, p in zip(truths, preds)])
    cum = np.array([
        cumulative_nrmse_pct(t, p.means, settings.cumulative_full_range) for t, p in zip(truths, preds)
    ])
    nl = cal = None
    if model.is_probabilistic:
        nl = np.array([nlpd(t, p, settings.nlpd_jitter) for t, p in zip(truths, preds)])
        cal = calibration_curve(truths, preds, settings.levels)
    return EvaluationResult(truths, preds, nr, dims, nl, cum, cal)


def metric_rows(res: EvaluationResult, system, model_kind, noise: NoiseSpec):
    rows = []
    for j in range(len(res.truths)):
        rows.append([
            system, model_kind, noise.kind, noise.intensity_pct, j, res.nrmse[j],
            res.nlpd[j] if res.probabilistic else None,
            *res.nrmse_dims[j],
        ])
    return rows


def _nanmean_rows(A):
    """Column means ignoring non-finite entries; NaN where nothing is finite
    (e.g. step 0 of a prefix-range cumulative NRMSE)."""
    ok = np.isfinite(A)
    cnt = ok.sum(axis=0)
    tot = np.where(ok, A, 0.0).sum(axis=0)
    return np.where(cnt > 0, tot / np.maximum(cnt, 1), np.nan)


def write_evaluation(res: EvaluationResult, out_dir, system, model_kind, noise: NoiseSpec, plots=False):
    """Write the metric, summary, cumulative, calibration and rollout CSVs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n_x = res.truths[0].shape[1]
    dim_cols = [f"nrmse_pct_x{d + 1}" for d in range(n_x)]
    write_csv(
        out / "metrics.csv",
        ["system", "model", "noise_kind", "intensity", "trajectory_id", "nrmse_pct", "nlpd", *dim_cols],
        metric_rows(res, system, model_kind, noise),
    )
    summ = res.summary()
    rows = [["nrmse_pct", *summ["nrmse_pct"]]]
    rows.append(["nlpd", *summ["nlpd"]] if "nlpd" in summ else ["nlpd", None, None])
    write_csv(out / "summary.csv", ["metric", "mean", "std"], rows)
    steps = np.arange(res.cumulative.shape[1])
    cum_mean = _nanmean_rows(res.cumulative)
    write_csv(out / "cumulative_nrmse.csv", ["step", "mean_cumulative_nrmse_pct"], zip(steps, cum_mean))
    if res.calibration is not None:
        write_csv(out / "calibration.csv", ["nominal", "empirical"], res.calibration)
    roll_dir = out / "rollouts"
    header = ["step"]
    for d in range(n_x):
        header += [f"truth_x{d + 1}", f"mean_x{d + 1}", f"std_x{d + 1}"]
    for j, (t, p) in enumerate(zip(res.truths, res.predictions)):
        sd = np.sqrt(np.maximum(np.diagonal(p.covs, axis1=1, axis2=2), 0.0))
        rows = []
        for k in range(t.shape[0]):
            row = [k]
            for d in range(n_x):
                row += [t[k, d], p.means[k, d], sd[k, d]]
            rows.append(row)
        write_csv(roll_dir / f"traj_{j:03d}.csv", header, rows)
    if plots:
        _plot(res, out)


def _plot(res, out):
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:  # pragma: no cover
        log.warning("matplotlib not installed; skipping plots")
        return
    fig, ax = plt.subplots()
    ax.plot(_nanmean_rows(res.cumulative))
    ax.set_xlabel("step")
    ax.set_ylabel("cumulative NRMSE %")
    fig.savefig(out / "cumulative_nrmse.png", dpi=120)
    plt.close(fig)
    if res.calibration is not None:
        fig, ax = plt.subplots()
        nom, emp = zip(*res.calibration)
        ax.plot([0, 1], [0, 1], "k--")
        ax.plot(nom, emp, "o-")
        ax.set_xlabel("nominal coverage")
        ax.set_ylabel("empirical coverage")
        fig.savefig(out / "calibration.png", dpi=120)
        plt.close(fig)


# -- one full cell -------------------------------------------------------------

def run_cell(cfg: ExperimentConfig, out_dir):
    """Generate, train and evaluate one (system, noise, model) configuration."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train, test = generate_datasets(cfg)
    model, run_log = fit_model(cfg.model, train, cfg.seed)
    save_model(out / "model.npz", model)
    if run_log:
        write_csv(out / "run_log.csv", RUN_LOG_HEADER, run_log)
    res = evaluate_model(model, test, cfg.evaluate)
    write_evaluation(res, out, cfg.system, cfg.model.kind, cfg.data.noise, cfg.evaluate.plots)
    return res


SSID_MARKER = "not implemented"

TABLE1_SCENARIOS = [
    NoiseSpec(), NoiseSpec("gaussian", 5.0), NoiseSpec("gaussian", 10.0),
    NoiseSpec("uniform", 5.0), NoiseSpec("uniform", 10.0),
]
TABLE2_SCENARIOS = [
    NoiseSpec(), NoiseSpec("gaussian", 10.0), NoiseSpec("gaussian", 20.0),
    NoiseSpec("uniform", 10.0), NoiseSpec("uniform", 20.0),
]
EDMD_MODELS = ("poly_edmd", "rbf_edmd", "igpk")


def _cells(target, base: ExperimentConfig | None):
    if target in ("table1", "fig2"):
        cfg = base if base is not None and base.system == "scalar" else default_config("scalar")
        scen = TABLE1_SCENARIOS if target == "table1" else [NoiseSpec()]
        return [(s, k, cfg.with_noise(s).with_model(replace(cfg.model, kind=k)))
                for s in scen for k in EDMD_MODELS]
    if target in ("table2", "fig3"):
        cfg = base if base is not None and base.system == "predator_prey" else default_config("predator_prey")
        scen = TABLE2_SCENARIOS if target == "table2" else [NoiseSpec("uniform", 10.0), NoiseSpec("gaussian", 10.0)]
        return [(s, "igpk", cfg.with_noise(s).with_model(replace(cfg.model, kind="igpk"))) for s in scen]
    raise InvalidConfig(f"unknown reproduction target {target!r}; choose table1, table2, fig2 or fig3")


def _run_cell_job(args):
    cfg, out = args
    res = run_cell(cfg, out)
    return {
        "nrmse": summarize(res.nrmse),
        "nlpd": summarize(res.nlpd) if res.probabilistic else None,
        "cumulative": _nanmean_rows(res.cumulative),
        "calibration": res.calibration,
        "first": (res.truths[0], res.predictions[0].means, res.predictions[0].covs),
    }


def reproduce(target, out_dir, seed=0, jobs=1, base=None):
    """Run every implemented cell of a benchmark table/figure and write summary CSVs."""
    cells = _cells(target, base)
    out = Path(out_dir)
    jobs_args = []
    for noise, kind, cfg in cells:
        cfg = cfg.with_seed(seed)
        jobs_args.append((cfg, out / "cells" / noise.label() / kind))
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(jobs) as pool:
            results = list(pool.map(_run_cell_job, jobs_args))
    else:
        results = [_run_cell_job(a) for a in jobs_args]
    by_cell = {(n.label(), k): r for (n, k, _), r in zip(cells, results)}
    with open(out / "config.json", "w") as fh:
        json.dump({"target": target, "seed": seed,
                   "cells": [config_to_dict(c.with_seed(seed)) for _, _, c in cells]},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")

    if target == "table1":
        header = ["scenario"]
        for k in EDMD_MODELS:
            header += [f"{k}_mean", f"{k}_std"]
        header.append("ssid_gpk")
        rows = []
        for s in TABLE1_SCENARIOS:
            row = [s.label()]
            for k in EDMD_MODELS:
                row += list(by_cell[(s.label(), k)]["nrmse"])
            row.append(SSID_MARKER)
            rows.append(row)
        write_csv(out / "table1.csv", header, rows)
    elif target == "table2":
        rows = [[s.label(), *by_cell[(s.label(), "igpk")]["nlpd"], SSID_MARKER] for s in TABLE2_SCENARIOS]
        write_csv(out / "table2.csv", ["scenario", "igpk_mean", "igpk_std", "ssid_gpk"], rows)
    elif target == "fig2":
        series = [by_cell[("clean", k)]["cumulative"] for k in EDMD_MODELS]
        steps = np.arange(series[0].size)
        write_csv(out / "fig2.csv", ["step", *EDMD_MODELS], zip(steps, *series))
    elif target == "fig3":
        truth, means, covs = by_cell[("uniform_10", "igpk")]["first"]
        sd = np.sqrt(np.maximum(np.diagonal(covs, axis1=1, axis2=2), 0.0))
        header = ["step", "truth_prey", "truth_predator", "mean_prey", "mean_predator",
                  "std_prey", "std_predator"]
        rows = [[k, *truth[k], *means[k], *sd[k]] for k in range(truth.shape[0])]
        write_csv(out / "fig3a.csv", header, rows)
        cal = by_cell[("gaussian_10", "igpk")]["calibration"]
        write_csv(out / "fig3b.csv", ["nominal", "empirical"], cal)
        write_csv(out / "fig3b_summary.csv", ["mean_abs_calibration_error"],
                  [[mean_abs_calibration_error(cal)]])
    return by_cell


def load_for_evaluation(model_path, data_dir):
    return load_model(model_path), read_dataset(data_dir)
