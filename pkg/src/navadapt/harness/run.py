"""One experiment run: pretrain on seen worlds, adapt across shifted copies.

(config, seed) pins every random draw through named substreams, so a rerun
reproduces episodes.jsonl and report.json byte for byte. Wall-clock numbers go
to a separate timing.json that determinism checks ignore.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass

from .. import SCHEMA_VERSION
from ..envgraph import GraphWorld, Task, apply_shift, generate_task, generate_world
from ..meo import episode_mixture_entropy, mixture_loss, mixture_loss_gradient
from ..metrics import RunReport, aggregate, episode_metrics
from ..oracles import GroundTruthOracle
from ..policy import (
    EpisodeRollout,
    PolicyParams,
    apply_gradient,
    pretrain_bc,
    rollout_episode,
    save_checkpoint,
)
from ..sal import (
    AGENT,
    AGENT_FALLBACK,
    HUMAN,
    AdaptationState,
    EpisodeMemory,
    HumanOracle,
    SelfHeadParams,
    adapt_episode,
    init_head,
    mean_entropy,
    route_oracle,
)
from ..seeding import derive_seed, substream
from .config import ConfigError, ExperimentConfig

# Source tag for episodes that used no label at all (frozen policy,
# unconditional entropy minimization, unsampled feedback episodes).
NO_SOURCE = "none"

# Pretraining dominates run cost at desk scale; (config, seed) cells within
# one process share checkpoints through this memo. Guarded for sweep threads.
_PRETRAIN_MEMO: dict[str, PolicyParams] = {}
_PRETRAIN_LOCK = threading.Lock()

# Config fields that influence the pretrained checkpoint and nothing else.
_PRETRAIN_FIELDS = (
    "n_seen_worlds",
    "n_nodes",
    "feature_dim",
    "connectivity",
    "success_radius",
    "max_steps",
    "hidden_dim",
    "pretrain_tasks_per_world",
    "pretrain_epochs",
    "pretrain_lr",
)


def seen_worlds(config: ExperimentConfig, seed: int) -> list[GraphWorld]:
    return [
        generate_world(
            derive_seed(seed, "seen-world", i),
            n_nodes=config.n_nodes,
            feature_dim=config.feature_dim,
            connectivity=config.connectivity,
        )
        for i in range(config.n_seen_worlds)
    ]


def pretrain_tasks(config: ExperimentConfig, seed: int, worlds: list[GraphWorld]) -> list[list[Task]]:
    return [
        [
            generate_task(
                world,
                derive_seed(seed, "pretrain-task", w, j),
                success_radius=config.success_radius,
                max_steps=config.max_steps,
            )
            for j in range(config.pretrain_tasks_per_world)
        ]
        for w, world in enumerate(worlds)
    ]


def _pretrain_key(config: ExperimentConfig, seed: int) -> str:
    payload = {name: getattr(config, name) for name in _PRETRAIN_FIELDS}
    payload["seed"] = seed
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.blake2b(blob, digest_size=16).hexdigest()


def pretrained_policy(
    config: ExperimentConfig, seed: int, worlds: list[GraphWorld] | None = None
) -> PolicyParams:
    """Behavior-cloned source policy for this (config, seed), memoized."""
    key = _pretrain_key(config, seed)
    with _PRETRAIN_LOCK:
        cached = _PRETRAIN_MEMO.get(key)
    if cached is not None:
        return cached.copy()
    if worlds is None:
        worlds = seen_worlds(config, seed)
    params = pretrain_bc(
        worlds,
        pretrain_tasks(config, seed, worlds),
        epochs=config.pretrain_epochs,
        lr=config.pretrain_lr,
        seed=derive_seed(seed, "pretrain-init"),
        hidden_dim=config.hidden_dim,
    )
    with _PRETRAIN_LOCK:
        _PRETRAIN_MEMO[key] = params
    return params.copy()


def shifted_suite(
    config: ExperimentConfig, seed: int, seen: list[GraphWorld] | None = None
) -> list[tuple[GraphWorld, list[Task]]]:
    """Shifted test worlds with their episode tasks, world-major order."""
    if seen is None:
        seen = seen_worlds(config, seed)
    suite = []
    for w in range(config.n_test_worlds):
        world = apply_shift(
            seen[w],
            config.shift_feature_noise_std,
            config.shift_edge_dropout,
            derive_seed(seed, "shift", w),
        )
        tasks = [
            generate_task(
                world,
                derive_seed(seed, "test-task", w, j),
                success_radius=config.success_radius,
                max_steps=config.max_steps,
            )
            for j in range(config.episodes_per_world)
        ]
        suite.append((world, tasks))
    return suite


def sampling_schedule(config: ExperimentConfig, seed: int) -> frozenset[int] | None:
    """Episode ids that query the oracle; None means the entropy gate decides."""
    if config.sampling == "uncertainty":
        return None
    n = config.n_episodes
    if config.sampling == "all":
        return frozenset(range(n))
    k = int(config.budget_k)
    if config.sampling == "consecutive_k":
        return frozenset(range(k))
    picks = substream(seed, "sampling").choice(n, size=k, replace=False)
    return frozenset(int(i) for i in picks)


def _method_lambda(config: ExperimentConfig) -> float:
    if config.method in ("atena", "meo_al"):
        return config.lam
    return 0.0


@dataclass(eq=False)
class RunResult:
    """In-memory counterpart of one run's on-disk log."""

    config: ExperimentConfig
    seed: int
    records: list[dict]
    report: RunReport
    params: PolicyParams
    head: SelfHeadParams | None
    pretrain_s: float
    adapt_s: float


def _record(
    config: ExperimentConfig,
    seed: int,
    episode_id: int,
    world_index: int,
    world: GraphWorld,
    task: Task,
    episode: EpisodeRollout,
    memory: EpisodeMemory,
    source: str,
    label: bool | None,
    self_prediction: bool | None,
    l_mix: float | None,
    l_self: float | None,
    l_total: float | None,
) -> dict:
    em = episode_metrics(world, task, list(episode.nodes), episode.stopped)
    mix = episode_mixture_entropy(episode, _method_lambda(config))
    return {
        "schema_version": SCHEMA_VERSION,
        "seed": seed,
        "method": config.method,
        "episode_id": episode_id,
        "world_index": world_index,
        "start": int(task.start),
        "goal": int(task.goal),
        "trajectory": [int(n) for n in episode.nodes],
        "steps": len(episode.steps),
        "stopped": bool(episode.stopped),
        "mean_entropy": mean_entropy(memory),
        "step_entropies": [float(h) for h in memory.step_entropies],
        "step_mix_entropies": [float(h) for h in mix.per_step_mix_entropy],
        "source": source,
        "label_used": label,
        "self_prediction": self_prediction,
        "true_success": bool(em.success),
        "success": bool(em.success),
        "oracle_success": bool(em.oracle_success),
        "tl": float(em.tl),
        "ne": float(em.ne),
        "spl_term": float(em.spl_term),
        "l_mix": l_mix,
        "l_self": l_self,
        "l_total": l_total,
    }


def _route_override(config: ExperimentConfig, sampled: frozenset[int] | None, episode_id: int) -> str | None:
    if sampled is None:
        return None
    return HUMAN if episode_id in sampled else AGENT


def run(
    config: ExperimentConfig,
    seed: int,
    run_dir: str | None = None,
    oracle: HumanOracle | None = None,
    on_episode=None,
) -> RunResult:
    """Execute one (config, seed) cell and optionally write its log directory.

    Method semantics: none never updates; entropy_min minimizes mean policy
    entropy on every episode; entropy_min_al and meo_al take one signed
    entropy step on labeled (sampled) episodes only, at lambda 0 and
    config.lam respectively; atena runs the full routed loop with the
    self-prediction head. `on_episode` is called with each finished record.
    """
    config.validate()
    if oracle is None:
        if config.oracle == "interactive":
            raise ConfigError("interactive oracle needs a live feedback channel; use serve")
        oracle = GroundTruthOracle(noise_rate=config.noise_rate, seed=seed)

    t0 = time.perf_counter()
    seen = seen_worlds(config, seed)
    params = pretrained_policy(config, seed, seen)
    t1 = time.perf_counter()
    suite = shifted_suite(config, seed, seen)
    sampled = sampling_schedule(config, seed)

    state = AdaptationState(
        params=params,
        head=init_head(config.hidden_dim),
        lam=config.lam,
        delta=config.delta,
        gamma=config.gamma,
        eta=config.eta,
    )
    records: list[dict] = []
    episode_id = 0
    for world_index in range(config.n_test_worlds):
        world, tasks = suite[world_index]
        for task in tasks:
            if config.method == "atena":
                state, outcome = adapt_episode(
                    state,
                    world,
                    task,
                    oracle,
                    episode_id,
                    route_override=_route_override(config, sampled, episode_id),
                )
                rec = _record(
                    config,
                    seed,
                    episode_id,
                    world_index,
                    world,
                    task,
                    outcome.episode,
                    outcome.memory,
                    source=outcome.source,
                    label=bool(outcome.label),
                    self_prediction=bool(outcome.self_prediction),
                    l_mix=float(outcome.l_mix),
                    l_self=float(outcome.l_self),
                    l_total=float(outcome.l_total),
                )
            else:
                episode = rollout_episode(state.params, world, task)
                memory = EpisodeMemory.from_rollout(episode)
                source, label = NO_SOURCE, None
                l_mix = None
                if config.method == "entropy_min":
                    l_mix = mixture_loss(episode, 0.0, True)
                    grad = mixture_loss_gradient(state.params, episode, 0.0, True)
                    state.params = apply_gradient(state.params, grad, config.eta)
                elif config.method in ("entropy_min_al", "meo_al"):
                    if sampled is None:
                        wants_label = route_oracle(mean_entropy(memory), config.delta) == HUMAN
                    else:
                        wants_label = episode_id in sampled
                    if wants_label:
                        # No self-head here, so a timed-out interactive query
                        # yields no label and the episode goes unused.
                        verdict, source = oracle.judge(
                            world, task, episode, memory, episode_id, fallback=lambda: False
                        )
                        if source != AGENT_FALLBACK:
                            label = bool(verdict)
                            lam = _method_lambda(config)
                            l_mix = mixture_loss(episode, lam, label)
                            grad = mixture_loss_gradient(state.params, episode, lam, label)
                            state.params = apply_gradient(state.params, grad, config.eta)
                rec = _record(
                    config,
                    seed,
                    episode_id,
                    world_index,
                    world,
                    task,
                    episode,
                    memory,
                    source=source,
                    label=label,
                    self_prediction=None,
                    l_mix=l_mix,
                    l_self=None,
                    l_total=None,
                )
            records.append(rec)
            if on_episode is not None:
                on_episode(rec)
            episode_id += 1
    t2 = time.perf_counter()

    report = aggregate(records)
    result = RunResult(
        config=config,
        seed=seed,
        records=records,
        report=report,
        params=state.params,
        head=state.head if config.method == "atena" else None,
        pretrain_s=t1 - t0,
        adapt_s=t2 - t1,
    )
    if run_dir is not None:
        write_run_dir(run_dir, result)
    return result


def write_run_dir(run_dir: str, result: RunResult) -> None:
    """Write the full log layout; everything but timing.json is deterministic."""
    os.makedirs(run_dir, exist_ok=True)
    envelope = {
        "schema_version": SCHEMA_VERSION,
        "config": result.config.to_dict(),
        "seed": result.seed,
    }
    with open(os.path.join(run_dir, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(envelope, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(run_dir, "episodes.jsonl"), "w", encoding="utf-8") as fh:
        for rec in result.records:
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")))
            fh.write("\n")
    with open(os.path.join(run_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump({**envelope, "metrics": result.report.to_dict()}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    save_checkpoint(os.path.join(run_dir, "adapted.ckpt"), result.params, result.seed)
    with open(os.path.join(run_dir, "timing.json"), "w", encoding="utf-8") as fh:
        json.dump(
            {
                "schema_version": SCHEMA_VERSION,
                "pretrain_s": result.pretrain_s,
                "adapt_s": result.adapt_s,
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
