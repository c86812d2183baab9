"""Instruction-conditioned navigation policy with hand-rolled gradients.

The network is deliberately small and fully transparent: a one-layer tanh
encoder turns [instruction; current features (+ history); 1] into a hidden
state s, and each candidate action is scored bilinearly as s . (W_act @ c).
Everything downstream (entropy objectives, the self head) differentiates
through this module's `backward`, so the forward caches keep every
intermediate they need.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envgraph import GraphWorld, Observation, Task, Terminal, geodesics_from, observe, step
from .seeding import substream

# Candidate vectors are [features, edge_length / EDGE_LEN_SCALE, 1].
EDGE_LEN_SCALE = 10.0
# Weight of the mean visited-node features folded into the current-features slot.
HISTORY_BLEND = 0.5
INIT_SCALE = 0.1


class NonFiniteParameterError(FloatingPointError):
    """An update produced NaN or inf parameters."""


@dataclass(eq=False)
class PolicyParams:
    """Learnable weights. Shapes: w_enc (D, 2F+1), b_enc (D,), w_act (D, F+2)."""

    w_enc: np.ndarray
    b_enc: np.ndarray
    w_act: np.ndarray

    def __post_init__(self) -> None:
        d, width = self.w_enc.shape
        if self.b_enc.shape != (d,):
            raise ValueError("b_enc shape mismatch")
        f = self.w_act.shape[1] - 2
        if self.w_act.shape[0] != d or width != 2 * f + 1:
            raise ValueError("inconsistent parameter shapes")

    @property
    def hidden_dim(self) -> int:
        return self.w_enc.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.w_act.shape[1] - 2

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.w_enc.copy(), self.b_enc.copy(), self.w_act.copy())

    def check_finite(self) -> None:
        for arr in (self.w_enc, self.b_enc, self.w_act):
            if not np.all(np.isfinite(arr)):
                raise NonFiniteParameterError("policy parameters are not finite")


@dataclass(eq=False)
class PolicyGradient:
    """Gradient container mirroring PolicyParams."""

    w_enc: np.ndarray
    b_enc: np.ndarray
    w_act: np.ndarray

    @classmethod
    def zeros_like(cls, params: PolicyParams) -> "PolicyGradient":
        return cls(
            np.zeros_like(params.w_enc),
            np.zeros_like(params.b_enc),
            np.zeros_like(params.w_act),
        )


@dataclass(eq=False)
class HiddenState:
    """Encoder output plus the intermediates backward needs."""

    s: np.ndarray  # tanh activations (D,)
    x: np.ndarray  # encoder input (2F+1,)
    z: np.ndarray  # pre-activations (D,)


@dataclass(eq=False)
class ActionDistribution:
    logits: np.ndarray
    probs: np.ndarray


@dataclass(eq=False)
class StepRecord:
    """Forward cache for one decision: enough to replay backward exactly."""

    node: int
    action: int
    hidden: HiddenState
    cand: np.ndarray  # (K, F+2) candidate matrix
    logits: np.ndarray
    probs: np.ndarray
    history_mean: np.ndarray


@dataclass(eq=False)
class EpisodeRollout:
    """Greedy rollout trace. nodes[0] is the start, final_node the last node."""

    steps: list[StepRecord]
    nodes: list[int]
    final_node: int
    stopped: bool


def init_params(seed: int, hidden_dim: int, feature_dim: int) -> PolicyParams:
    """Uniform [-INIT_SCALE, INIT_SCALE] weights from a named substream."""
    rng = substream(seed, "policy-init")
    return PolicyParams(
        w_enc=rng.uniform(-INIT_SCALE, INIT_SCALE, size=(hidden_dim, 2 * feature_dim + 1)),
        b_enc=rng.uniform(-INIT_SCALE, INIT_SCALE, size=hidden_dim),
        w_act=rng.uniform(-INIT_SCALE, INIT_SCALE, size=(hidden_dim, feature_dim + 2)),
    )


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits)
    e = np.exp(shifted)
    return e / e.sum()


def candidate_matrix(obs: Observation) -> np.ndarray:
    """Stack candidate vectors [features, length/EDGE_LEN_SCALE, 1], STOP first."""
    return np.stack(
        [np.concatenate([c.features, [c.length / EDGE_LEN_SCALE, 1.0]]) for c in obs.candidates]
    )


def encode(
    params: PolicyParams,
    instruction: np.ndarray,
    obs: Observation,
    history_mean: np.ndarray,
) -> HiddenState:
    """Hidden state for one step.

    The current node's features come from the STOP candidate (index 0), which
    carries them by construction. The visited-history mean enters as a fixed
    additive blend on that slot; it is a function of past hard decisions and
    is treated as a constant by backward.
    """
    current = obs.candidates[0].features
    x = np.concatenate([instruction, current + HISTORY_BLEND * history_mean, [1.0]])
    z = params.w_enc @ x + params.b_enc
    return HiddenState(s=np.tanh(z), x=x, z=z)


def action_distribution(
    params: PolicyParams, hidden: HiddenState, cand: np.ndarray
) -> ActionDistribution:
    """Bilinear scores s . (W_act @ c_k) for every candidate, then softmax."""
    logits = cand @ (params.w_act.T @ hidden.s)
    return ActionDistribution(logits=logits, probs=softmax(logits))


def select_action(dist: ActionDistribution) -> int:
    """Greedy argmax; ties resolve to the lowest index (STOP wins exact ties)."""
    return int(np.argmax(dist.probs))


def rollout_episode(params: PolicyParams, world: GraphWorld, task: Task) -> EpisodeRollout:
    """Greedy rollout from task.start until STOP or the step budget runs out."""
    obs = observe(world, task.start, 0)
    nodes = [task.start]
    steps: list[StepRecord] = []
    hist_sum = np.zeros(world.feature_dim)
    while True:
        history_mean = hist_sum / len(steps) if steps else hist_sum
        hidden = encode(params, task.instruction, obs, history_mean)
        cand = candidate_matrix(obs)
        dist = action_distribution(params, hidden, cand)
        action = select_action(dist)
        steps.append(
            StepRecord(
                node=obs.current,
                action=action,
                hidden=hidden,
                cand=cand,
                logits=dist.logits,
                probs=dist.probs,
                history_mean=history_mean,
            )
        )
        outcome = step(world, obs, action, task.max_steps)
        if isinstance(outcome, Terminal):
            if outcome.node != nodes[-1]:
                nodes.append(outcome.node)
            return EpisodeRollout(
                steps=steps, nodes=nodes, final_node=outcome.node, stopped=outcome.stopped
            )
        hist_sum = hist_sum + world.features[obs.current]
        nodes.append(outcome.current)
        obs = outcome


def backward(
    params: PolicyParams,
    steps: list[StepRecord],
    d_logits: list[np.ndarray] | None = None,
    d_hidden: list[np.ndarray] | None = None,
) -> PolicyGradient:
    """Accumulate parameter gradients over cached steps.

    d_logits[t] is dL/dlogits at step t, d_hidden[t] is any extra dL/ds_t
    injected downstream of the encoder (the self head uses this). Either may
    be None. Caches must come from a forward pass under `params`; reusing
    stale caches is a contract violation this function cannot detect.
    """
    grad = PolicyGradient.zeros_like(params)
    for t, st in enumerate(steps):
        s = st.hidden.s
        ds = np.zeros_like(s)
        if d_logits is not None:
            dl = d_logits[t]
            grad.w_act += np.outer(s, dl @ st.cand)
            ds += params.w_act @ (st.cand.T @ dl)
        if d_hidden is not None:
            ds += d_hidden[t]
        dz = ds * (1.0 - s * s)
        grad.w_enc += np.outer(dz, st.hidden.x)
        grad.b_enc += dz
    return grad


def apply_gradient(params: PolicyParams, grad: PolicyGradient, lr: float) -> PolicyParams:
    """One plain gradient-descent step; returns new params, checked finite."""
    out = PolicyParams(
        w_enc=params.w_enc - lr * grad.w_enc,
        b_enc=params.b_enc - lr * grad.b_enc,
        w_act=params.w_act - lr * grad.w_act,
    )
    out.check_finite()
    return out


# --- behavior-cloning pretraining ------------------------------------------


@dataclass(eq=False)
class ExpertStep:
    """One teacher-forced supervision point along an expert path."""

    task: Task
    obs: Observation
    history_mean: np.ndarray
    action: int


def expert_action(world: GraphWorld, task: Task, obs: Observation, dist_to_goal: np.ndarray) -> int:
    """STOP inside the radius, else the move minimizing edge + remaining geodesic."""
    if dist_to_goal[obs.current] <= task.success_radius:
        return 0
    scores = [c.length + dist_to_goal[c.node_id] for c in obs.candidates[1:]]
    return 1 + int(np.argmin(scores))


def build_expert_dataset(
    worlds: list[GraphWorld], tasks: list[list[Task]]
) -> list[tuple[GraphWorld, ExpertStep]]:
    """Teacher-forced (observation, expert action) pairs along expert paths."""
    data: list[tuple[GraphWorld, ExpertStep]] = []
    for world, world_tasks in zip(worlds, tasks):
        for task in world_tasks:
            dist_to_goal = geodesics_from(world, task.goal)
            obs = observe(world, task.start, 0)
            hist_sum = np.zeros(world.feature_dim)
            n_visited = 0
            while True:
                history_mean = hist_sum / n_visited if n_visited else hist_sum
                action = expert_action(world, task, obs, dist_to_goal)
                data.append((world, ExpertStep(task, obs, history_mean, action)))
                if action == 0:
                    break
                if n_visited > 4 * world.n_nodes:  # expert monotonically approaches the goal
                    raise RuntimeError("expert walk failed to terminate")
                hist_sum = hist_sum + world.features[obs.current]
                n_visited += 1
                obs = observe(world, obs.candidates[action].node_id, obs.step_index + 1)
    return data


def _forward_expert_step(params: PolicyParams, item: ExpertStep) -> StepRecord:
    hidden = encode(params, item.task.instruction, item.obs, item.history_mean)
    cand = candidate_matrix(item.obs)
    dist = action_distribution(params, hidden, cand)
    return StepRecord(
        node=item.obs.current,
        action=item.action,
        hidden=hidden,
        cand=cand,
        logits=dist.logits,
        probs=dist.probs,
        history_mean=item.history_mean,
    )


def bc_loss_and_agreement(
    params: PolicyParams, dataset: list[tuple[GraphWorld, ExpertStep]]
) -> tuple[float, float]:
    """(mean cross-entropy, expert-action agreement rate) over a dataset."""
    total = 0.0
    hits = 0
    for _, item in dataset:
        rec = _forward_expert_step(params, item)
        total += -float(np.log(rec.probs[item.action]))
        hits += int(np.argmax(rec.probs)) == item.action
    return total / len(dataset), hits / len(dataset)


def pretrain_bc(
    worlds: list[GraphWorld],
    tasks: list[list[Task]],
    epochs: int,
    lr: float,
    seed: int,
    hidden_dim: int,
) -> PolicyParams:
    """Full-batch cross-entropy descent toward the shortest-path expert."""
    if not worlds or not tasks or len(worlds) != len(tasks):
        raise ValueError("worlds and tasks must be non-empty and aligned")
    dataset = build_expert_dataset(worlds, tasks)
    params = init_params(seed, hidden_dim, worlds[0].feature_dim)
    n = len(dataset)
    for _ in range(epochs):
        steps = []
        d_logits = []
        for _, item in dataset:
            rec = _forward_expert_step(params, item)
            dl = rec.probs.copy()
            dl[item.action] -= 1.0  # d(mean CE)/dlogits, pre 1/n scaling
            steps.append(rec)
            d_logits.append(dl / n)
        grad = backward(params, steps, d_logits=d_logits)
        params = apply_gradient(params, grad, lr)
    return params


# --- checkpoints ------------------------------------------------------------


def save_checkpoint(path, params: PolicyParams, seed: int) -> None:
    """One JSON header line + raw little-endian float64 weights."""
    import json

    header = {
        "schema_version": 1,
        "kind": "policy",
        "hidden_dim": params.hidden_dim,
        "feature_dim": params.feature_dim,
        "dtype": "<f8",
        "seed": seed,
    }
    blob = np.concatenate(
        [params.w_enc.ravel(), params.b_enc, params.w_act.ravel()]
    ).astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(blob)


def load_checkpoint(path) -> tuple[PolicyParams, dict]:
    """Inverse of save_checkpoint; corrupt headers or truncated blobs raise."""
    import json

    with open(path, "rb") as fh:
        raw = fh.read()
    newline = raw.find(b"\n")
    if newline < 0:
        raise ValueError("checkpoint missing header line")
    try:
        header = json.loads(raw[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValueError(f"unreadable checkpoint header: {exc}") from exc
    if header.get("kind") != "policy" or header.get("dtype") != "<f8":
        raise ValueError("not a policy checkpoint")
    d, f = int(header["hidden_dim"]), int(header["feature_dim"])
    sizes = [d * (2 * f + 1), d, d * (f + 2)]
    blob = raw[newline + 1 :]
    if len(blob) != 8 * sum(sizes):
        raise ValueError("checkpoint payload size mismatch")
    flat = np.frombuffer(blob, dtype="<f8")
    w_enc = flat[: sizes[0]].reshape(d, 2 * f + 1).copy()
    b_enc = flat[sizes[0] : sizes[0] + d].copy()
    w_act = flat[sizes[0] + d :].reshape(d, f + 2).copy()
    params = PolicyParams(w_enc=w_enc, b_enc=b_enc, w_act=w_act)
    params.check_finite()
    return params, header
