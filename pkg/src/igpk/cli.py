"""Command-line entry point: ``igpk generate|train|evaluate|reproduce``.

Exit codes: 0 success, 2 configuration/validation error, 3 training
divergence, 4 I/O error. The only environment variable consulted is
``IGPK_OUTPUT_DIR``, which overrides the output directory when ``--out``
is not given.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import pipeline
from .config import ExperimentConfig, config_to_dict, default_config, load_config
from .data_io import read_dataset, write_csv
from .errors import DimensionMismatch, IoError, InvalidConfig, NonFiniteTrajectory, TrainingDiverged
from .koopman import load_model, save_model
from .systems import NoiseSpec

log = logging.getLogger("igpk")

OUTPUT_ENV = "IGPK_OUTPUT_DIR"
EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 2, 3, 4


def _common(p):
    p.add_argument("--config", type=Path, help="YAML experiment config")
    p.add_argument("--seed", type=int, help="global seed (overrides the config)")
    p.add_argument("--out", type=Path, help=f"output directory (else ${OUTPUT_ENV}, else config)")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="igpk", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    g = sub.add_parser("generate", help="simulate train/test datasets")
    _common(g)
    t = sub.add_parser("train", help="fit a model on a training dataset")
    _common(t)
    t.add_argument("--data", type=Path, help="training dataset directory (default: generate it)")
    e = sub.add_parser("evaluate", help="roll out a model on a test dataset")
    _common(e)
    e.add_argument("--model", type=Path, required=True)
    e.add_argument("--data", type=Path, required=True, help="test dataset directory")
    e.add_argument("--plots", action="store_true", help="also render PNG plots (needs matplotlib)")
    r = sub.add_parser("reproduce", help="regenerate a table or figure end to end")
    _common(r)
    r.add_argument("target", help="table1, table2, fig2 or fig3")
    return parser


def _resolve(args) -> tuple[ExperimentConfig, Path]:
    if args.jobs < 1:
        raise InvalidConfig("--jobs must be at least 1")
    cfg = load_config(args.config) if args.config else default_config()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    out = args.out or os.environ.get(OUTPUT_ENV) or cfg.output
    return cfg, Path(out)


def _dataset_dir(path: Path, split: str) -> Path:
    """Accept either a split directory or a ``generate`` output holding ``<split>/``."""
    if (path / "meta.json").exists():
        return path
    if (path / split / "meta.json").exists():
        return path / split
    raise IoError(f"{path}: no dataset found (expected meta.json or {split}/meta.json)")


def cmd_generate(args):
    cfg, out = _resolve(args)
    train_dir, test_dir = pipeline.write_generated(cfg, out)
    log.info("wrote %s and %s", train_dir, test_dir)


def cmd_train(args):
    cfg, out = _resolve(args)
    if args.data is not None:
        train = read_dataset(_dataset_dir(args.data, "train"))
    else:
        train, _ = pipeline.generate_datasets(cfg)
    model, run_log = pipeline.fit_model(cfg.model, train, cfg.seed, jobs=args.jobs)
    out.mkdir(parents=True, exist_ok=True)
    save_model(out / "model.npz", model)
    if run_log:
        write_csv(out / "run_log.csv", pipeline.RUN_LOG_HEADER, run_log)
    with open(out / "config.json", "w") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")
    log.info("saved %s", out / "model.npz")


def cmd_evaluate(args):
    cfg, out = _resolve(args)
    model = load_model(args.model)
    test = read_dataset(_dataset_dir(args.data, "test"))
    settings = replace(cfg.evaluate, plots=cfg.evaluate.plots or args.plots)
    res = pipeline.evaluate_model(model, test, settings)
    noise = _noise_of_model_dir(args.model, cfg)
    kind = "igpk" if model.is_probabilistic else type(model.observables).__name__
    kind = {"PolyDictionary": "poly_edmd", "RbfDictionary": "rbf_edmd"}.get(kind, kind)
    pipeline.write_evaluation(res, out, cfg.system, kind, noise, settings.plots)
    s = res.summary()
    log.info("NRMSE %% mean %.4g std %.4g", *s["nrmse_pct"])
    if "nlpd" in s:
        log.info("NLPD mean %.4g std %.4g", *s["nlpd"])


def _noise_of_model_dir(model_path, cfg):
    # The training noise is only known through the config that produced the
    # model; fall back to the current config.
    cfg_file = Path(model_path).with_name("config.json")
    if cfg_file.exists():
        try:
            noise = json.loads(cfg_file.read_text())["data"]["noise"]
            return NoiseSpec(noise["kind"], float(noise["intensity_pct"]))
        except (KeyError, ValueError, TypeError):
            pass
    return cfg.data.noise


def cmd_reproduce(args):
    cfg, out = _resolve(args)
    base = cfg if args.config else None
    pipeline.reproduce(args.target, out, cfg.seed, jobs=args.jobs, base=base)
    log.info("wrote %s", out)


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "reproduce": cmd_reproduce,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        COMMANDS[args.command](args)
    except (InvalidConfig, DimensionMismatch) as exc:
        print(f"igpk: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingDiverged, NonFiniteTrajectory) as exc:
        print(f"igpk: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"igpk: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
