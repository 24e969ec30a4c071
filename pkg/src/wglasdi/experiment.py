"""Paired desk-scale runs: weak vs strong loss, greedy vs uniform sampling.

Every variant trains on the same noisy data source and is scored against
clean FOM solutions on a held-out test grid and on the full parameter grid.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import spearmanr

from . import rom
from .config import ExperimentConfig
from .fom import solve
from .latentdi import STRONG, TYPE_I, TYPE_II
from .trainer import greedy_loop

# (label, loss mode, initial sampling)
VARIANTS = (
    ("weakI-greedy", TYPE_I, "greedy"),
    ("weakII-greedy", TYPE_II, "greedy"),
    ("strong-greedy", STRONG, "greedy"),
    ("weakI-uniform", TYPE_I, "uniform"),
)

TABLE_HEADER = ("variant", "mode", "sampling", "samples", "test_max_e_max", "test_mean_e_max",
                "grid_max_e_max", "grid_mean_e_max", "spearman_eres_emax", "final_loss",
                "train_seconds")


@dataclass
class References:
    """Clean FOM snapshots on the test grid and on the full parameter grid."""
    test_mus: np.ndarray
    test: list[np.ndarray]
    grid_mus: np.ndarray
    grid: list[np.ndarray]

    @classmethod
    def build(cls, cfg: ExperimentConfig) -> "References":
        problem, g, t = cfg.fom_problem(), cfg.problem.grid(), cfg.problem.time()
        test_mus = cfg.test_space().points()
        grid_mus = cfg.param_space().points()
        return cls(test_mus, [solve(problem, mu, g, t).values for mu in test_mus],
                   grid_mus, [solve(problem, mu, g, t).values for mu in grid_mus])


@dataclass
class RunResult:
    label: str
    mode: str
    sampling: str
    model: rom.RomModel
    trace: list
    loss_history: list
    test_errors: np.ndarray
    test_indicators: np.ndarray
    grid_errors: np.ndarray
    seconds: float
    extra: dict = field(default_factory=dict)

    @property
    def spearman(self) -> float:
        return float(spearmanr(self.test_indicators, self.test_errors)[0])

    @property
    def final_loss(self) -> float:
        return self.loss_history[-1][1] if self.loss_history else float("nan")

    def row(self) -> tuple:
        return (self.label, self.mode, self.sampling, len(self.model.coeffs),
                float(self.test_errors.max()), float(self.test_errors.mean()),
                float(self.grid_errors.max()), float(self.grid_errors.mean()),
                self.spearman, self.final_loss, self.seconds)


def uniform_per_axis(cfg: ExperimentConfig) -> int:
    """Side of the square uniform design that matches the greedy sample budget."""
    budget = cfg.train_config().budget or len(cfg.initial_indices())
    side = int(round(np.sqrt(budget)))
    if side * side != budget:
        raise ValueError(f"sample budget {budget} is not a perfect square")
    return side


def run_variant(cfg: ExperimentConfig, mode: str, sampling: str, refs: References,
                label: str | None = None) -> RunResult:
    tc = cfg.train_config()
    tc.mode = mode
    space = cfg.param_space()
    if sampling == "uniform":
        initial = space.uniform_indices(uniform_per_axis(cfg))
    else:
        initial = cfg.initial_indices()
    t0 = time.perf_counter()
    model, trace, trainer = greedy_loop(cfg.source(), initial, tc, cfg.encoder_spec(),
                                        cfg.library_spec())
    seconds = time.perf_counter() - t0
    n_ts = tc.n_ts

    def errors(mus, references):
        return np.array([rom.max_relative_error(U, rom.predict(model, mu).values)
                         for mu, U in zip(mus, references)])

    return RunResult(
        label=label or f"{mode}-{sampling}", mode=mode, sampling=sampling, model=model,
        trace=trace, loss_history=list(trainer.state.loss_history),
        test_errors=errors(refs.test_mus, refs.test),
        test_indicators=np.array([rom.error_indicator(model, mu, n_ts) for mu in refs.test_mus]),
        grid_errors=errors(refs.grid_mus, refs.grid), seconds=seconds,
    )


def run_comparison(cfg: ExperimentConfig, variants=VARIANTS, refs: References | None = None,
                   log=print) -> dict[str, RunResult]:
    refs = refs or References.build(cfg)
    out = {}
    for label, mode, sampling in variants:
        res = run_variant(cfg, mode, sampling, refs, label)
        if log:
            log(f"{label:>14}: test max {res.test_errors.max():.4f} "
                f"mean {res.test_errors.mean():.4f} | grid mean {res.grid_errors.mean():.4f} "
                f"| rho {res.spearman:.2f} | {res.seconds:.0f}s")
        out[label] = res
    return out


def write_table(results: dict[str, RunResult], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TABLE_HEADER)
        for res in results.values():
            w.writerow(res.row())


def format_table(results: dict[str, RunResult]) -> str:
    lines = [f"{'variant':>14} {'samples':>7} {'test max':>9} {'test mean':>9} "
             f"{'grid max':>9} {'grid mean':>9} {'rho':>6}"]
    for r in results.values():
        lines.append(f"{r.label:>14} {len(r.model.coeffs):>7d} {r.test_errors.max():>9.4f} "
                     f"{r.test_errors.mean():>9.4f} {r.grid_errors.max():>9.4f} "
                     f"{r.grid_errors.mean():>9.4f} {r.spearman:>6.2f}")
    return "\n".join(lines)
