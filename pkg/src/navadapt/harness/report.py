"""Render finished run logs into method tables and confusion summaries.

Works from the on-disk layout only (report.json + episodes.jsonl), so it can
summarize runs from other processes or machines. Verification recomputes every
aggregate from the raw episode records and compares against the stored report;
the two paths share no intermediate state.
"""

from __future__ import annotations

import csv
import json
import math
import os
import statistics

from ..metrics import aggregate
from .config import METHODS

SUMMARY_METRICS = (
    "sr",
    "osr",
    "spl",
    "tl_mean",
    "ne_mean",
    "active_episode_ratio",
    "active_step_ratio",
)


def load_report(run_dir: str) -> dict:
    with open(os.path.join(run_dir, "report.json"), "r", encoding="utf-8") as fh:
        return json.load(fh)


def load_records(run_dir: str) -> list[dict]:
    records = []
    with open(os.path.join(run_dir, "episodes.jsonl"), "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def verify_run_dir(run_dir: str, rel_tol: float = 1e-9) -> tuple[bool, str]:
    """Recompute the report from episodes.jsonl and compare with report.json."""
    stored = load_report(run_dir)["metrics"]
    fresh = aggregate(load_records(run_dir)).to_dict()
    if stored["n_episodes"] != fresh["n_episodes"]:
        return False, f"episode count mismatch: {stored['n_episodes']} vs {fresh['n_episodes']}"
    for key in SUMMARY_METRICS:
        a, b = float(stored[key]), float(fresh[key])
        if not math.isclose(a, b, rel_tol=rel_tol, abs_tol=rel_tol):
            return False, f"{key} mismatch: stored {a} vs recomputed {b}"
    for key in ("tp", "fp", "tn", "fn"):
        if stored["confusion"][key] != fresh["confusion"][key]:
            return False, f"confusion {key} mismatch"
    return True, "ok"


def _method_order(methods: set[str]) -> list[str]:
    known = [m for m in METHODS if m in methods]
    return known + sorted(methods - set(known))


def summarize(reports: list[dict]) -> list[dict]:
    """Group per-run reports by method; mean/std per metric, pooled confusion."""
    if not reports:
        raise ValueError("no reports to summarize")
    by_method: dict[str, list[dict]] = {}
    for rep in reports:
        by_method.setdefault(rep["config"]["method"], []).append(rep)
    rows = []
    for method in _method_order(set(by_method)):
        group = by_method[method]
        row = {"method": method, "n_runs": len(group)}
        for metric in SUMMARY_METRICS:
            values = [float(rep["metrics"][metric]) for rep in group]
            row[f"{metric}_mean"] = statistics.fmean(values)
            row[f"{metric}_std"] = statistics.stdev(values) if len(values) > 1 else 0.0
        pooled = {k: sum(rep["metrics"]["confusion"][k] for rep in group) for k in ("tp", "fp", "tn", "fn")}
        total = sum(pooled.values())
        row.update({f"self_{k}": v for k, v in pooled.items()})
        row["self_accuracy_pct"] = (
            100.0 * (pooled["tp"] + pooled["tn"]) / total if total else None
        )
        rows.append(row)
    return rows


def _fmt_pair(mean: float, std: float) -> str:
    return f"{mean:7.2f} ({std:5.2f})"


def format_summary(rows: list[dict]) -> str:
    """Fixed-width text table, one row per method, mean (std) per metric."""
    headers = ["method", "runs", "sr", "osr", "spl", "tl", "ne", "act_ep", "act_step", "self_acc"]
    lines = [
        f"{headers[0]:<16}{headers[1]:>5}  "
        + "  ".join(f"{h:>15}" for h in headers[2:9])
        + f"  {headers[9]:>9}"
    ]
    for row in rows:
        cells = [
            _fmt_pair(row[f"{m}_mean"], row[f"{m}_std"])
            for m in ("sr", "osr", "spl", "tl_mean", "ne_mean")
        ]
        cells.append(_fmt_pair(100.0 * row["active_episode_ratio_mean"], 100.0 * row["active_episode_ratio_std"]))
        cells.append(_fmt_pair(100.0 * row["active_step_ratio_mean"], 100.0 * row["active_step_ratio_std"]))
        acc = row["self_accuracy_pct"]
        acc_text = "-" if acc is None else f"{acc:8.2f}"
        lines.append(
            f"{row['method']:<16}{row['n_runs']:>5}  "
            + "  ".join(f"{c:>15}" for c in cells)
            + f"  {acc_text:>9}"
        )
    return "\n".join(lines)


def format_confusion(rows: list[dict]) -> str:
    """Pooled self-prediction confusion for methods that made predictions."""
    with_preds = [r for r in rows if (r["self_tp"] + r["self_fp"] + r["self_tn"] + r["self_fn"]) > 0]
    if not with_preds:
        return "self-prediction confusion: no predictions logged"
    lines = [f"{'method':<16}{'tp':>6}{'fp':>6}{'tn':>6}{'fn':>6}{'accuracy_pct':>14}"]
    for row in with_preds:
        lines.append(
            f"{row['method']:<16}{row['self_tp']:>6}{row['self_fp']:>6}"
            f"{row['self_tn']:>6}{row['self_fn']:>6}{row['self_accuracy_pct']:>14.2f}"
        )
    return "\n".join(lines)


def report_text(run_dirs: list[str], verify: bool = True) -> str:
    """Full console report over a set of run directories."""
    reports = [load_report(d) for d in run_dirs]
    rows = summarize(reports)
    parts = [format_summary(rows), "", format_confusion(rows)]
    if verify:
        bad = []
        for d in run_dirs:
            ok, message = verify_run_dir(d)
            if not ok:
                bad.append(f"  {d}: {message}")
        parts.append("")
        if bad:
            parts.append("verification FAILED:")
            parts.extend(bad)
        else:
            parts.append(f"verification: all {len(run_dirs)} run dirs recompute cleanly")
    return "\n".join(parts)


def write_summary_csv(rows: list[dict], path: str) -> None:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    columns = ["method", "n_runs"]
    for metric in SUMMARY_METRICS:
        columns += [f"{metric}_mean", f"{metric}_std"]
    columns += ["self_tp", "self_fp", "self_tn", "self_fn", "self_accuracy_pct"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["schema_version", 1])
        writer.writerow(columns)
        for row in rows:
            writer.writerow(["" if row.get(c) is None else row.get(c) for c in columns])


def write_summary_json(rows: list[dict], path: str) -> None:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"schema_version": 1, "rows": rows}, fh, indent=2, sort_keys=True)
        fh.write("\n")
