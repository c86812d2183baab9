"""Navigation metrics and run-level aggregation.

Success requires the agent to have stopped within the success radius, not
merely to have been cut off there by the step budget; oracle success only
asks whether any visited node came within the radius. SPL follows the
standard definition: success weighted by shortest-path length over the
maximum of traveled and shortest length.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .envgraph import GraphWorld, Task, geodesic, geodesics_from


@dataclass(frozen=True)
class EpisodeMetrics:
    tl: float  # trajectory length, meters
    ne: float  # navigation error: final geodesic distance to goal, meters
    success: bool
    oracle_success: bool
    spl_term: float  # in [0, 1]; positive only on success


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def accuracy_pct(self) -> float | None:
        if self.total == 0:
            return None
        return 100.0 * (self.tp + self.tn) / self.total

    def to_dict(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
            "accuracy_pct": self.accuracy_pct,
        }


@dataclass(frozen=True)
class RunReport:
    """Aggregate of one run; percentages for SR/OSR/SPL, ratios in [0, 1]."""

    n_episodes: int
    sr: float
    osr: float
    spl: float
    tl_mean: float
    ne_mean: float
    active_episode_ratio: float
    active_step_ratio: float
    confusion: ConfusionMatrix

    def to_dict(self) -> dict:
        return {
            "n_episodes": self.n_episodes,
            "sr": self.sr,
            "osr": self.osr,
            "spl": self.spl,
            "tl_mean": self.tl_mean,
            "ne_mean": self.ne_mean,
            "active_episode_ratio": self.active_episode_ratio,
            "active_step_ratio": self.active_step_ratio,
            "confusion": self.confusion.to_dict(),
        }

    @staticmethod
    def csv_header() -> list[str]:
        return [
            "n_episodes",
            "sr",
            "osr",
            "spl",
            "tl_mean",
            "ne_mean",
            "active_episode_ratio",
            "active_step_ratio",
            "self_tp",
            "self_fp",
            "self_tn",
            "self_fn",
            "self_accuracy_pct",
        ]

    def csv_row(self) -> list:
        acc = self.confusion.accuracy_pct
        return [
            self.n_episodes,
            self.sr,
            self.osr,
            self.spl,
            self.tl_mean,
            self.ne_mean,
            self.active_episode_ratio,
            self.active_step_ratio,
            self.confusion.tp,
            self.confusion.fp,
            self.confusion.tn,
            self.confusion.fn,
            "" if acc is None else acc,
        ]


def episode_metrics(
    world: GraphWorld, task: Task, trajectory: Sequence[int], stopped: bool
) -> EpisodeMetrics:
    """Metrics for one finished episode.

    `trajectory` is the visited node sequence starting at task.start;
    `stopped` distinguishes a deliberate STOP from budget truncation (the
    trajectory alone cannot).
    """
    if not trajectory or trajectory[0] != task.start:
        raise ValueError("trajectory must be non-empty and start at task.start")
    tl = 0.0
    for u, v in zip(trajectory[:-1], trajectory[1:]):
        tl += world.edge_length(u, v)
    final = trajectory[-1]
    from_goal = geodesics_from(world, task.goal)
    ne = float(from_goal[final])
    success = stopped and ne <= task.success_radius
    oracle_success = bool(any(from_goal[n] <= task.success_radius for n in trajectory))
    shortest = geodesic(world, task.start, task.goal)
    spl_term = (shortest / max(tl, shortest)) if success else 0.0
    return EpisodeMetrics(
        tl=tl, ne=ne, success=success, oracle_success=oracle_success, spl_term=spl_term
    )


def aggregate(records: Sequence[dict]) -> RunReport:
    """Fold per-episode log records into a RunReport.

    Each record needs the episode_metrics fields plus `source`, `steps`, and
    (possibly null) `self_prediction` / `true_success`. The fold is a set of
    means and ratios, so episode order cannot matter.
    """
    if not records:
        raise ValueError("no episodes to aggregate")
    n = len(records)
    human = [r["source"] == "human" for r in records]
    steps = [int(r["steps"]) for r in records]
    tp = fp = tn = fn = 0
    for r in records:
        if r.get("self_prediction") is None:
            continue
        pred, truth = bool(r["self_prediction"]), bool(r["true_success"])
        if pred and truth:
            tp += 1
        elif pred and not truth:
            fp += 1
        elif not pred and not truth:
            tn += 1
        else:
            fn += 1
    return RunReport(
        n_episodes=n,
        sr=100.0 * sum(r["success"] for r in records) / n,
        osr=100.0 * sum(r["oracle_success"] for r in records) / n,
        spl=100.0 * sum(r["spl_term"] for r in records) / n,
        tl_mean=float(np.mean([r["tl"] for r in records])),
        ne_mean=float(np.mean([r["ne"] for r in records])),
        active_episode_ratio=sum(human) / n,
        active_step_ratio=(
            sum(s for s, h in zip(steps, human) if h) / sum(steps) if sum(steps) else 0.0
        ),
        confusion=ConfusionMatrix(tp=tp, fp=fp, tn=tn, fn=fn),
    )
