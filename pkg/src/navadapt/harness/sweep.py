"""Config sweeps: cross products over config fields, mean/std tables, and the
matched-budget sampling comparison. Cells are independent (config, seed) runs
and execute on a small thread pool; all shared state lives behind locks inside
the pretraining memo."""

from __future__ import annotations

import csv
import dataclasses
import itertools
import os
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from ..sal import HUMAN
from .config import ConfigError, ExperimentConfig
from .run import RunResult, run

# Report fields that land in the sweep table, in column order.
SWEEP_METRICS = (
    "sr",
    "osr",
    "spl",
    "tl_mean",
    "ne_mean",
    "active_episode_ratio",
    "active_step_ratio",
)

_FIELD_NAMES = {f.name for f in dataclasses.fields(ExperimentConfig)}


@dataclass(eq=False)
class SweepCell:
    """One grid point with its per-seed results."""

    overrides: dict
    config: ExperimentConfig
    results: list[RunResult]

    def stats(self, metric: str) -> tuple[float, float]:
        values = [float(getattr(res.report, metric)) for res in self.results]
        mean = statistics.fmean(values)
        std = statistics.stdev(values) if len(values) > 1 else 0.0
        return mean, std

    def self_accuracy(self) -> tuple[float, float] | None:
        values = [res.report.confusion.accuracy_pct for res in self.results]
        if any(v is None for v in values):
            return None
        mean = statistics.fmean(values)
        std = statistics.stdev(values) if len(values) > 1 else 0.0
        return mean, std

    def flag(self) -> str:
        # lam=1.0 makes the mixture constant in the logits: its gradient is
        # identically zero, so a sweep point there measures nothing.
        if self.config.lam == 1.0 and self.config.method in ("meo_al", "atena"):
            return "zero-mixture-gradient"
        return ""


def _cell_configs(base: ExperimentConfig, grid: dict) -> list[tuple[dict, ExperimentConfig]]:
    unknown = set(grid) - _FIELD_NAMES
    if unknown:
        raise ConfigError(f"grid over unknown config fields: {sorted(unknown)}")
    if "seeds" in grid or "out_dir" in grid:
        raise ConfigError("seeds and out_dir cannot be swept")
    keys = sorted(grid)
    for key in keys:
        if not isinstance(grid[key], (list, tuple)) or not grid[key]:
            raise ConfigError(f"grid values for {key!r} must be a non-empty list")
    cells = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        overrides = dict(zip(keys, combo))
        cells.append((overrides, base.replace(**overrides)))
    return cells


def sweep(
    base: ExperimentConfig,
    grid: dict,
    out_csv: str | None = None,
    run_root: str | None = None,
    n_workers: int | None = None,
) -> list[SweepCell]:
    """Cross-product of grid x base.seeds, one run per (cell, seed).

    Cells appear in sorted-key/product order regardless of which thread
    finished first, so the CSV is deterministic. With run_root set, each run
    writes its log under run_root/<cell>/seed<seed>.
    """
    cells = _cell_configs(base, grid)
    jobs = []
    for cell_index, (overrides, config) in enumerate(cells):
        for seed in config.seeds:
            run_dir = None
            if run_root is not None:
                tag = "-".join(f"{k}={overrides[k]}" for k in sorted(overrides)) or "base"
                run_dir = os.path.join(run_root, f"{cell_index:03d}-{tag}", f"seed{seed}")
            jobs.append((cell_index, config, seed, run_dir))
    if n_workers is None:
        n_workers = min(4, os.cpu_count() or 1)
    results: dict[tuple[int, int], RunResult] = {}
    with ThreadPoolExecutor(max_workers=max(1, n_workers)) as pool:
        futures = {
            pool.submit(run, config, seed, run_dir): (cell_index, seed)
            for cell_index, config, seed, run_dir in jobs
        }
        for future, key in futures.items():
            results[key] = future.result()
    out = []
    for cell_index, (overrides, config) in enumerate(cells):
        per_seed = [results[(cell_index, seed)] for seed in config.seeds]
        out.append(SweepCell(overrides=overrides, config=config, results=per_seed))
    if out_csv is not None:
        write_sweep_csv(out, out_csv)
    return out


def sweep_csv_header(grid_keys: list[str]) -> list[str]:
    header = list(grid_keys) + ["n_seeds"]
    for metric in SWEEP_METRICS:
        header += [f"{metric}_mean", f"{metric}_std"]
    header += ["self_accuracy_pct_mean", "self_accuracy_pct_std", "flag"]
    return header


def write_sweep_csv(cells: list[SweepCell], path: str) -> None:
    if not cells:
        raise ValueError("no sweep cells to write")
    grid_keys = sorted(cells[0].overrides)
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["schema_version", 1])
        writer.writerow(sweep_csv_header(grid_keys))
        for cell in cells:
            row = [cell.overrides[k] for k in grid_keys]
            row.append(len(cell.results))
            for metric in SWEEP_METRICS:
                mean, std = cell.stats(metric)
                row += [f"{mean:.6f}", f"{std:.6f}"]
            acc = cell.self_accuracy()
            row += ["", ""] if acc is None else [f"{acc[0]:.6f}", f"{acc[1]:.6f}"]
            row.append(cell.flag())
            writer.writerow(row)


def realized_human_episodes(result: RunResult) -> int:
    return sum(1 for rec in result.records if rec["source"] == HUMAN)


def run_matched_sampling(
    config: ExperimentConfig, seed: int, run_root: str | None = None
) -> dict:
    """Sampling-strategy comparison at one seed with a matched label budget.

    The uncertainty run goes first; its realized human-episode count becomes
    budget_k for the random_k and consecutive_k runs, so every strategy spends
    the same number of oracle queries.
    """
    base = config.replace(sampling="uncertainty", budget_k=None)
    ref_dir = os.path.join(run_root, f"uncertainty-seed{seed}") if run_root else None
    reference = run(base, seed, run_dir=ref_dir)
    k = realized_human_episodes(reference)
    out = {"uncertainty": reference, "budget_k": k}
    for mode in ("random_k", "consecutive_k"):
        cfg = config.replace(sampling=mode, budget_k=k)
        mode_dir = os.path.join(run_root, f"{mode}-seed{seed}") if run_root else None
        out[mode] = run(cfg, seed, run_dir=mode_dir)
    return out
