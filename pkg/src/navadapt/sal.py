"""Self-active learning: oracle routing, the self-prediction head, and the
per-episode adaptation step that ties everything together.

Routing is the active-learning half: an episode whose mean per-step policy
entropy exceeds the threshold goes to the human backend, everything else is
labeled by the agent's own head. The head is an affine map on the episode-mean
hidden state, trained online with binary cross-entropy on whichever label was
used, so over time the agent answers more of its own queries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Protocol

import numpy as np

from .envgraph import GraphWorld, Task, is_success
from .meo import entropy, mixture_loss, mixture_step_dlogits
from .policy import (
    EpisodeRollout,
    NonFiniteParameterError,
    PolicyParams,
    apply_gradient,
    backward,
    rollout_episode,
)

HUMAN = "human"
AGENT = "agent"
AGENT_FALLBACK = "agent(fallback)"


@dataclass(eq=False)
class SelfHeadParams:
    """Affine self-prediction head: f(s) = w . s + b."""

    w: np.ndarray
    b: float

    def copy(self) -> "SelfHeadParams":
        return SelfHeadParams(w=self.w.copy(), b=self.b)

    def check_finite(self) -> None:
        if not (np.all(np.isfinite(self.w)) and math.isfinite(self.b)):
            raise NonFiniteParameterError("self-head parameters are not finite")


def init_head(hidden_dim: int) -> SelfHeadParams:
    # Zeros put sigma(f) at 0.5: the head starts maximally unsure.
    return SelfHeadParams(w=np.zeros(hidden_dim), b=0.0)


@dataclass(eq=False)
class EpisodeMemory:
    """What one episode leaves behind: entropies, hidden states, the path."""

    step_entropies: list[float]
    step_states: list[np.ndarray]
    trajectory: list[tuple[int, int]]  # (node, action) per step

    def __post_init__(self) -> None:
        n = len(self.step_entropies)
        if n < 1 or len(self.step_states) != n or len(self.trajectory) != n:
            raise ValueError("memory lists must have equal length >= 1")

    @classmethod
    def from_rollout(cls, episode: EpisodeRollout) -> "EpisodeMemory":
        return cls(
            step_entropies=[entropy(st.probs) for st in episode.steps],
            step_states=[st.hidden.s for st in episode.steps],
            trajectory=[(st.node, st.action) for st in episode.steps],
        )


@dataclass(frozen=True)
class OracleDecision:
    source: str  # HUMAN or AGENT
    mean_entropy: float
    threshold: float


def mean_entropy(memory: EpisodeMemory) -> float:
    """Mean of the stored per-step policy entropies (not mixture entropies)."""
    if not memory.step_entropies:
        raise ValueError("empty memory")
    return float(np.mean(memory.step_entropies))


def route_oracle(mean_ent: float, delta: float) -> str:
    """HUMAN iff mean entropy strictly exceeds delta; the boundary stays AGENT."""
    if delta < 0.0:
        raise ValueError("delta must be >= 0")
    return HUMAN if mean_ent > delta else AGENT


def sigmoid(f: float) -> float:
    """Overflow-safe logistic function."""
    if f >= 0.0:
        return 1.0 / (1.0 + math.exp(-f))
    e = math.exp(f)
    return e / (1.0 + e)


def average_state(memory: EpisodeMemory) -> np.ndarray:
    return np.mean(memory.step_states, axis=0)


def self_logit(head: SelfHeadParams, memory: EpisodeMemory) -> float:
    return float(head.w @ average_state(memory) + head.b)


def self_predict(head: SelfHeadParams, memory: EpisodeMemory) -> bool:
    """Predicted success: sigma(f) > 0.5, equivalently f > 0 (boundary fails)."""
    return self_logit(head, memory) > 0.0


def self_loss(head: SelfHeadParams, memory: EpisodeMemory, label: bool) -> float:
    """Binary cross-entropy in the stable logit form."""
    f = self_logit(head, memory)
    y = 1.0 if label else 0.0
    return max(f, 0.0) - f * y + math.log1p(math.exp(-abs(f)))


def self_loss_residual(head: SelfHeadParams, memory: EpisodeMemory, label: bool) -> float:
    """dL_self/df = sigma(f) - y; the whole gradient hangs off this scalar."""
    return sigmoid(self_logit(head, memory)) - (1.0 if label else 0.0)


def total_loss(l_mix: float, l_self: float, gamma: float) -> float:
    if gamma < 0.0:
        raise ValueError("gamma must be >= 0")
    return l_mix + gamma * l_self


class HumanOracle(Protocol):
    """Feedback backend contract for the human-routed branch."""

    def judge(
        self,
        world: GraphWorld,
        task: Task,
        episode: EpisodeRollout,
        memory: EpisodeMemory,
        episode_id: int,
        fallback: Callable[[], bool],
    ) -> tuple[bool, str]:
        """Return (label, source). source is HUMAN or AGENT_FALLBACK."""
        ...


@dataclass(eq=False)
class AdaptationState:
    """Everything one adaptation stream owns: parameters plus hyperparameters."""

    params: PolicyParams
    head: SelfHeadParams
    lam: float
    delta: float
    gamma: float
    eta: float


@dataclass(eq=False)
class EpisodeOutcome:
    """Full record of one adapted episode, ready for logging."""

    episode: EpisodeRollout
    memory: EpisodeMemory
    decision: OracleDecision
    source: str  # HUMAN, AGENT, or AGENT_FALLBACK
    label: bool
    true_success: bool
    self_prediction: bool
    l_mix: float
    l_self: float
    l_total: float


def adapt_episode(
    state: AdaptationState,
    world: GraphWorld,
    task: Task,
    human_oracle: HumanOracle,
    episode_id: int,
    route_override: str | None = None,
) -> tuple[AdaptationState, EpisodeOutcome]:
    """One full adaptation cycle on one episode (batch size 1).

    Greedy rollout -> episode memory -> entropy routing -> binary label from
    the routed backend -> signed mixture loss + self-prediction loss -> one
    gradient step on policy and head together. `route_override` lets the
    harness substitute a different sampling rule for the entropy gate (the
    Algorithm-1 gate is the default); the label backend semantics stay intact.

    The label is a constant in the loss: no gradient flows through the backend
    that produced it, human or self.
    """
    episode = rollout_episode(state.params, world, task)
    memory = EpisodeMemory.from_rollout(episode)
    mean_ent = mean_entropy(memory)
    routed = route_override if route_override is not None else route_oracle(mean_ent, state.delta)
    decision = OracleDecision(source=routed, mean_entropy=mean_ent, threshold=state.delta)

    self_pred = self_predict(state.head, memory)
    true_success = episode.stopped and is_success(world, episode.final_node, task)

    if routed == HUMAN:
        label, source = human_oracle.judge(
            world, task, episode, memory, episode_id, fallback=lambda: self_pred
        )
    else:
        label, source = self_pred, AGENT

    l_mix = mixture_loss(episode, state.lam, label)
    l_self = self_loss(state.head, memory, label)
    l_tot = total_loss(l_mix, l_self, state.gamma)

    # Policy gradient: the mixture term through the logits, the self term
    # through the stored hidden states (s_avg is their mean).
    n_steps = len(episode.steps)
    residual = self_loss_residual(state.head, memory, label)
    d_logits = mixture_step_dlogits(episode, state.lam, label)
    d_state = (state.gamma * residual / n_steps) * state.head.w
    grad = backward(state.params, episode.steps, d_logits=d_logits, d_hidden=[d_state] * n_steps)
    new_params = apply_gradient(state.params, grad, state.eta)

    s_avg = average_state(memory)
    new_head = SelfHeadParams(
        w=state.head.w - state.eta * state.gamma * residual * s_avg,
        b=state.head.b - state.eta * state.gamma * residual,
    )
    new_head.check_finite()

    outcome = EpisodeOutcome(
        episode=episode,
        memory=memory,
        decision=decision,
        source=source,
        label=label,
        true_success=true_success,
        self_prediction=self_pred,
        l_mix=l_mix,
        l_self=l_self,
        l_total=l_tot,
    )
    return replace(state, params=new_params, head=new_head), outcome
