"""Command line entry point: generate, train, evaluate, predict, heatmap.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import traceback
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import rom
from .data import (Dataset, DatasetEntry, assemble, load_dataset, load_model, save_dataset,
                   save_model)
from .errors import ConfigError, DomainError, FormatError, NumericalError
from .fom import solve
from .trainer import LOSS_TERMS, Trainer

log = logging.getLogger("wglasdi")

MODEL_FILE = "model.wglm"
CHECKPOINT_FILE = "checkpoint.wglm"


def dataset_path_for(model_path) -> Path:
    """The training data that goes with a model file: same stem, .wgld suffix."""
    return Path(model_path).with_suffix(".wgld")


# --- helpers ----------------------------------------------------------------------------------

def _resolve_config(args, fallback_dir: Path | None = None) -> cfgmod.ExperimentConfig:
    if args.config and args.preset:
        raise ConfigError("pass either --config or --preset, not both")
    if args.config:
        cfg = cfgmod.load(args.config)
    elif args.preset:
        cfg = cfgmod.preset(args.preset)
    elif fallback_dir is not None and (fallback_dir / "config.json").exists():
        cfg = cfgmod.load(fallback_dir / "config.json")
    else:
        raise ConfigError("a configuration is required (--config or --preset)")
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "noise", None) is not None:
        cfg.noise = args.noise
    return cfg.validate()


def _prepare_out(out: Path, files: list[str], force: bool) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    clash = [f for f in files if (out / f).exists()]
    if clash and not force:
        raise ConfigError(f"{out} already holds {', '.join(clash)}; use --force to overwrite")
    return out


def _write_config(out: Path, cfg: cfgmod.ExperimentConfig) -> None:
    (out / "config.json").write_text(cfg.dumps())


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _parse_indices(text: str, cfg: cfgmod.ExperimentConfig) -> list[int]:
    space = cfg.param_space()
    if text == "initial":
        return cfg.initial_indices()
    if text == "corners":
        return space.corners()
    if text == "all":
        return list(range(space.size))
    try:
        idx = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse indices {text!r}") from exc
    if any(not 0 <= i < space.size for i in idx):
        raise ConfigError(f"indices must lie in [0, {space.size})")
    return idx


def _parse_mu(text: str) -> np.ndarray:
    try:
        mu = np.array([float(v) for v in text.split(",")])
    except ValueError as exc:
        raise ConfigError(f"cannot parse parameter {text!r}") from exc
    if mu.shape != (2,):
        raise ConfigError("a parameter needs exactly two comma-separated values")
    return mu


def _check_compatible(ds: Dataset, cfg: cfgmod.ExperimentConfig) -> None:
    if (ds.problem != cfg.fom_problem() or ds.grid != cfg.problem.grid()
            or ds.time != cfg.problem.time()):
        raise ConfigError("dataset problem, grid, or time grid does not match the configuration")


def _loss_rows(state):
    return [(int(r[0]),) + tuple(repr(float(v)) for v in r[1:]) for r in state.loss_history]


def _trace_rows(state):
    return [(ev.event, ev.epoch, ev.index, *ev.mu, repr(ev.indicator)) for ev in state.trace]


def _write_training_logs(out: Path, cfg, state) -> None:
    _write_csv(out / "loss_log.csv", ("epoch",) + LOSS_TERMS, _loss_rows(state))
    names = cfg.param_space().names
    _write_csv(out / "sampling_trace.csv", ("event", "epoch", "index", *names, "indicator"),
               _trace_rows(state))


def _references(out: Path, model, space, force: bool):
    """Clean FOM solutions on ``space``, cached as references.wgld in ``out``."""
    path = out / "references.wgld"
    mus = space.points()
    if path.exists():
        try:
            ds = load_dataset(path)
            same = (ds.problem == model.problem and ds.grid == model.grid
                    and ds.time == model.time and len(ds) == len(mus)
                    and np.allclose(ds.mus, mus, rtol=0, atol=1e-14))
            if same:
                log.info("using cached references from %s", path)
                return [e.clean for e in ds.entries]
        except FormatError:
            pass
    ds = Dataset(model.problem, model.grid, model.time, 0.0, 0, space)
    for i, mu in enumerate(mus):
        U = solve(model.problem, mu, model.grid, model.time).values
        ds.entries.append(DatasetEntry(i, mu, U, U, 0))
    save_dataset(ds, path)
    return [e.clean for e in ds.entries]


# --- subcommands ------------------------------------------------------------------------------

def cmd_generate(args) -> int:
    cfg = _resolve_config(args)
    out = _prepare_out(Path(args.out), ["dataset.wgld", "dataset.wgld.json"], args.force)
    indices = _parse_indices(args.indices, cfg)
    ds = assemble(cfg.source(), indices)
    save_dataset(ds, out / "dataset.wgld")
    _write_config(out, cfg)
    log.info("wrote %d trajectories to %s", len(ds), out / "dataset.wgld")
    return 0


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    if args.epochs is not None:
        cfg.train["epochs"] = args.epochs
    if args.mode is not None:
        cfg.train["mode"] = args.mode
    cfg.validate()
    tc = cfg.train_config()
    out = _prepare_out(Path(args.out), [MODEL_FILE, "loss_log.csv", "sampling_trace.csv"],
                       args.force)
    source = cfg.source()
    state = None
    if args.resume:
        model, state = load_model(args.resume)
        if state is None:
            raise ConfigError(f"{args.resume} holds no trainer state to resume from")
        ds = load_dataset(args.dataset or dataset_path_for(args.resume))
        if ds.indices != list(model.indices):
            raise ConfigError("resume dataset does not match the checkpoint's training points")
    elif args.dataset:
        ds = load_dataset(args.dataset)
    else:
        ds = assemble(source, cfg.initial_indices())
    _check_compatible(ds, cfg)
    if ds.space is None:
        ds.space = cfg.param_space()
    trainer = Trainer(ds, tc, cfg.encoder_spec(), cfg.library_spec(), state=state)
    _write_config(out, cfg)

    def checkpoint(tr):
        if args.checkpoint_every and tr.state.epoch % args.checkpoint_every == 0:
            save_model(out / CHECKPOINT_FILE, tr.model(), tr.state)
            save_dataset(tr.dataset, dataset_path_for(out / CHECKPOINT_FILE))

    try:
        trainer.run(source, callback=checkpoint, log_every=args.log_every)
    finally:
        # logs are useful even when training aborts
        _write_training_logs(out, cfg, trainer.state)
    model = trainer.model()
    save_model(out / MODEL_FILE, model, trainer.state)
    save_dataset(trainer.dataset, dataset_path_for(out / MODEL_FILE))
    log.info("trained %d epochs on %d samples; model at %s", trainer.state.epoch,
             len(trainer.dataset), out / MODEL_FILE)
    return 0


def cmd_evaluate(args) -> int:
    model_path = Path(args.model)
    model, _ = load_model(model_path)
    cfg = _resolve_config(args, fallback_dir=model_path.parent)
    out = _prepare_out(Path(args.out), ["summary.json", "errors.csv", "speedup.csv",
                                        "heatmap.csv"], args.force)
    _write_config(out, cfg)
    names = cfg.param_space().names
    if args.points == "training":
        ds = load_dataset(dataset_path_for(model_path))
        mus = ds.mus
        refs = [e.clean for e in ds.entries]
    else:
        space = cfg.test_space()
        mus = space.points()
        refs = _references(out, model, space, args.force)
    errs, inds = [], []
    for mu, ref in zip(mus, refs):
        errs.append(rom.max_relative_error(ref, rom.predict(model, mu).values))
        inds.append(rom.error_indicator(model, mu, cfg.train_config().n_ts))
    _write_csv(out / "errors.csv", (*names, "e_max", "e_res"),
               [(*map(float, mu), repr(e), repr(r)) for mu, e, r in zip(mus, errs, inds)])
    if args.points != "training":
        rom.write_heatmap_csv(out / "heatmap.csv",
                              np.asarray(errs).reshape(space.resolution), space)
    n_time = min(args.timing if args.timing is not None else cfg.evaluate.timing_points, len(mus))
    rows = rom.time_predictions(model, model.problem, mus[:n_time]) if n_time else []
    _write_csv(out / "speedup.csv", (*names, "fom_seconds", "rom_seconds", "speedup"),
               [(*mu, repr(tf), repr(tr), repr(s)) for mu, tf, tr, s in rows])
    summary = {
        "points": len(errs),
        "max_e_max": float(np.max(errs)),
        "mean_e_max": float(np.mean(errs)),
        "per_point": [{"mu": [float(v) for v in mu], "e_max": float(e), "e_res": float(r)}
                      for mu, e, r in zip(mus, errs, inds)],
        "mean_speedup": float(np.mean([r[3] for r in rows])) if rows else None,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"max e_max {summary['max_e_max']:.4%}  mean e_max {summary['mean_e_max']:.4%}"
          + (f"  speedup {summary['mean_speedup']:.1f}x" if rows else ""))
    return 0


def cmd_heatmap(args) -> int:
    model_path = Path(args.model)
    model, _ = load_model(model_path)
    cfg = _resolve_config(args, fallback_dir=model_path.parent)
    out = _prepare_out(Path(args.out), ["heatmap.csv"], args.force)
    space = cfg.test_space()
    refs = _references(out, model, space, args.force)
    matrix = rom.heatmap(model, space, refs)
    rom.write_heatmap_csv(out / "heatmap.csv", matrix, space)
    print(f"max e_max {matrix.max():.4%}  mean e_max {matrix.mean():.4%}")
    return 0


def cmd_predict(args) -> int:
    model, _ = load_model(args.model)
    mu = _parse_mu(args.mu)
    out = Path(args.out)
    if out.exists() and not args.force:
        raise ConfigError(f"{out} exists; use --force to overwrite")
    out.parent.mkdir(parents=True, exist_ok=True)
    traj = rom.predict(model, mu)
    n_u = traj.values.shape[1]
    _write_csv(out, ["t"] + [f"u{j}" for j in range(n_u)],
               [[repr(float(t))] + [repr(float(v)) for v in row]
                for t, row in zip(model.time.times, traj.values)])
    return 0


# --- parser -----------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wglasdi", description=__doc__.splitlines()[0])
    p.add_argument("--threads", type=int, default=None, help="cap BLAS/OpenMP threads")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="experiment JSON file")
            sp.add_argument("--preset", help=f"one of: {', '.join(sorted(cfgmod.PRESETS))}")
            sp.add_argument("--seed", type=int, default=None, help="override the root seed")
        sp.add_argument("--out", required=True)
        sp.add_argument("--force", action="store_true", help="overwrite existing outputs")

    g = sub.add_parser("generate", help="solve the FOM and write a noisy dataset")
    common(g)
    g.add_argument("--noise", type=float, default=None, help="override the noise level")
    g.add_argument("--indices", default="initial",
                   help="'initial', 'corners', 'all', or comma-separated flat indices")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train with greedy sampling")
    common(t)
    t.add_argument("--dataset", help="start from this dataset instead of generating one")
    t.add_argument("--resume", help="continue from a model file that carries trainer state")
    t.add_argument("--epochs", type=int, default=None)
    t.add_argument("--mode", choices=["weakTypeI", "weakTypeII", "strong"], default=None)
    t.add_argument("--checkpoint-every", type=int, default=0)
    t.add_argument("--log-every", type=int, default=0)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="errors, heatmap, and speed-up of a trained model")
    common(e)
    e.add_argument("--model", required=True)
    e.add_argument("--points", choices=["grid", "training"], default="grid")
    e.add_argument("--timing", type=int, default=None, help="parameters to time")
    e.set_defaults(func=cmd_evaluate)

    h = sub.add_parser("heatmap", help="maximum relative error on the test grid")
    common(h)
    h.add_argument("--model", required=True)
    h.set_defaults(func=cmd_heatmap)

    r = sub.add_parser("predict", help="ROM trajectory at one parameter, as CSV")
    common(r, config=False)
    r.add_argument("--model", required=True)
    r.add_argument("--mu", required=True, help="comma-separated parameter pair")
    r.set_defaults(func=cmd_predict)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.threads is not None:
            from threadpoolctl import threadpool_limits
            with threadpool_limits(limits=args.threads):
                return args.func(args)
        return args.func(args)
    except (ConfigError, DomainError, FormatError, FileNotFoundError) as exc:
        print(f"error [{_origin(exc)}]: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure [{_origin(exc)}]: {exc}", file=sys.stderr)
        return 3


def _origin(exc: BaseException) -> str:
    """Module in which the exception was raised."""
    frames = traceback.extract_tb(exc.__traceback__)
    return Path(frames[-1].filename).stem if frames else "wglasdi"


if __name__ == "__main__":
    sys.exit(main())
