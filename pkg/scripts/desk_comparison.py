"""Desk-scale 1D Burgers comparison: weak vs strong loss, greedy vs uniform sampling.

    python3 scripts/desk_comparison.py --out results/desk [--preset burgers1d-desk] [--seed N]

Writes comparison.csv (one row per variant), heatmaps of e_max over the full
parameter grid for every variant, the greedy sampling traces, and config.json.
"""

import argparse
import csv
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from wglasdi import config as cfgmod
from wglasdi import rom
from wglasdi.experiment import References, format_table, run_comparison, write_table


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="burgers1d-desk")
    ap.add_argument("--config", help="experiment JSON (overrides --preset)")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--epochs", type=int, default=None)
    ap.add_argument("--out", default="results/desk")
    args = ap.parse_args()

    cfg = cfgmod.load(args.config) if args.config else cfgmod.preset(args.preset)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.epochs is not None:
        cfg.train["epochs"] = args.epochs
    cfg.validate()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.dumps())

    with threadpool_limits(limits=1):
        refs = References.build(cfg)
        results = run_comparison(cfg, refs=refs)
        model = results["weakI-greedy"].model
        timing = rom.time_predictions(model, cfg.fom_problem(), refs.test_mus[:3])

    write_table(results, out / "comparison.csv")
    space = cfg.param_space()
    for label, res in results.items():
        rom.write_heatmap_csv(out / f"heatmap_{label}.csv",
                              res.grid_errors.reshape(space.resolution), space)
        with open(out / f"trace_{label}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("event", "epoch", "index", *space.names, "indicator"))
            w.writerows((e.event, e.epoch, e.index, *e.mu, e.indicator) for e in res.trace)
    with open(out / "speedup.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow((*space.names, "fom_seconds", "rom_seconds", "speedup"))
        w.writerows((*mu, tf, tr, s) for mu, tf, tr, s in timing)

    print()
    print(format_table(results))
    print(f"\nmean speed-up {np.mean([r[3] for r in timing]):.0f}x; outputs in {out}")


if __name__ == "__main__":
    main()
