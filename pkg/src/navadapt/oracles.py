"""Feedback backends: simulated ground truth, the agent's own head, and a
blocking channel through which a live human answers over HTTP.

All three produce the same thing - one binary success label per episode - so
the adaptation loop never knows who answered. The channel is the only object
shared across threads in the whole package; a Condition serializes the run
loop (which blocks awaiting an answer) against HTTP handlers (which deliver
it).
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from typing import Callable

from .envgraph import GraphWorld, Task, is_success
from .policy import EpisodeRollout
from .sal import AGENT_FALLBACK, HUMAN, EpisodeMemory, SelfHeadParams, mean_entropy, self_predict
from .seeding import derive_seed, substream


class FeedbackError(RuntimeError):
    pass


class UnknownEpisodeError(FeedbackError):
    """Response for an episode id that was never requested."""


class DuplicateResponseError(FeedbackError):
    """Response for an episode id that already got its answer."""


@dataclass(frozen=True)
class FeedbackRequest:
    """Everything a human needs to judge one finished episode."""

    episode_id: int
    instruction: list[float]
    trajectory_nodes: list[int]
    trajectory_positions: list[list[float]]
    start: int
    goal: int
    stopped: bool
    mean_entropy: float
    threshold: float
    created_at: int  # monotonic per-run sequence number

    def to_dict(self) -> dict:
        return {
            "episode_id": self.episode_id,
            "instruction": self.instruction,
            "trajectory_nodes": self.trajectory_nodes,
            "trajectory_positions": self.trajectory_positions,
            "start": self.start,
            "goal": self.goal,
            "stopped": self.stopped,
            "mean_entropy": self.mean_entropy,
            "threshold": self.threshold,
            "created_at": self.created_at,
        }


@dataclass(frozen=True)
class FeedbackResponse:
    episode_id: int
    success: bool
    responder: str


def ground_truth_feedback(
    world: GraphWorld,
    task: Task,
    final_node: int,
    noise_rate: float = 0.0,
    seed: int = 0,
    stopped: bool = True,
) -> bool:
    """Benchmark success, optionally flipped with seeded probability.

    Truncated episodes (stopped=False) are failures regardless of where the
    budget ran out. noise_rate=0 draws nothing, keeping noise-free runs
    byte-deterministic.
    """
    if not 0.0 <= noise_rate <= 1.0:
        raise ValueError("noise_rate must be in [0, 1]")
    truth = stopped and is_success(world, final_node, task)
    if noise_rate > 0.0 and float(substream(seed).random()) < noise_rate:
        return not truth
    return truth


def agent_feedback(head: SelfHeadParams, memory: EpisodeMemory) -> bool:
    """The agent answering for itself; identical contract to self_predict."""
    return self_predict(head, memory)


class GroundTruthOracle:
    """Simulated human: always answers, from benchmark success."""

    def __init__(self, noise_rate: float = 0.0, seed: int = 0):
        self.noise_rate = noise_rate
        self.seed = seed

    def judge(
        self,
        world: GraphWorld,
        task: Task,
        episode: EpisodeRollout,
        memory: EpisodeMemory,
        episode_id: int,
        fallback: Callable[[], bool],
    ) -> tuple[bool, str]:
        label = ground_truth_feedback(
            world,
            task,
            episode.final_node,
            noise_rate=self.noise_rate,
            seed=derive_seed(self.seed, "label-noise", episode_id),
            stopped=episode.stopped,
        )
        return label, HUMAN


class FeedbackChannel:
    """Single-slot blocking mailbox between one run loop and HTTP handlers.

    The run loop parks in request() until respond() delivers a matching
    answer or the timeout lapses. Episode ids are answered at most once:
    late or repeated responses raise DuplicateResponseError, unknown ids
    raise UnknownEpisodeError.
    """

    def __init__(self) -> None:
        self._cond = threading.Condition()
        self._pending: FeedbackRequest | None = None
        self._response: FeedbackResponse | None = None
        self._answered: set[int] = set()
        self._sequence = 0

    def next_sequence(self) -> int:
        with self._cond:
            self._sequence += 1
            return self._sequence

    def pending(self) -> FeedbackRequest | None:
        """The request currently awaiting a human, if any."""
        with self._cond:
            if self._pending is not None and self._response is None:
                return self._pending
            return None

    def request(self, req: FeedbackRequest, timeout_s: float | None) -> FeedbackResponse | None:
        """Block until a response arrives; None signals timeout."""
        with self._cond:
            if self._pending is not None:
                raise FeedbackError("another request is already pending")
            if req.episode_id in self._answered:
                raise FeedbackError(f"episode {req.episode_id} was already requested")
            self._pending = req
            self._response = None
            self._cond.notify_all()
            deadline = None if timeout_s is None else time.monotonic() + timeout_s
            while self._response is None:
                if deadline is None:
                    self._cond.wait()
                else:
                    remaining = deadline - time.monotonic()
                    if remaining <= 0.0:
                        break
                    self._cond.wait(remaining)
            response = self._response
            self._pending = None
            self._response = None
            self._answered.add(req.episode_id)
            return response

    def respond(self, episode_id: int, success: bool, responder: str = "human") -> None:
        with self._cond:
            if (
                self._pending is not None
                and self._pending.episode_id == episode_id
                and self._response is None
            ):
                self._response = FeedbackResponse(
                    episode_id=episode_id, success=bool(success), responder=responder
                )
                self._cond.notify_all()
                return
            if episode_id in self._answered or (
                self._pending is not None and self._pending.episode_id == episode_id
            ):
                raise DuplicateResponseError(f"episode {episode_id} already answered")
            raise UnknownEpisodeError(f"episode {episode_id} has no outstanding request")


class InteractiveOracle:
    """Human-over-HTTP backend; falls back to the agent label on timeout."""

    def __init__(
        self,
        channel: FeedbackChannel,
        timeout_s: float | None = None,
        threshold: float = 0.0,
    ):
        self.channel = channel
        self.timeout_s = timeout_s
        self.threshold = threshold

    def judge(
        self,
        world: GraphWorld,
        task: Task,
        episode: EpisodeRollout,
        memory: EpisodeMemory,
        episode_id: int,
        fallback: Callable[[], bool],
    ) -> tuple[bool, str]:
        request = FeedbackRequest(
            episode_id=episode_id,
            instruction=[float(x) for x in task.instruction],
            trajectory_nodes=[int(n) for n in episode.nodes],
            trajectory_positions=[
                [float(x) for x in world.positions[n]] for n in episode.nodes
            ],
            start=task.start,
            goal=task.goal,
            stopped=episode.stopped,
            mean_entropy=mean_entropy(memory),
            threshold=self.threshold,
            created_at=self.channel.next_sequence(),
        )
        response = self.channel.request(request, self.timeout_s)
        if response is None:
            return fallback(), AGENT_FALLBACK
        return bool(response.success), HUMAN
