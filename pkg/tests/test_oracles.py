"""Feedback backends and the blocking human-feedback channel."""

import threading
import time

import numpy as np
import pytest
from conftest import hand_world

from navadapt.envgraph import Task
from navadapt.oracles import (
    DuplicateResponseError,
    FeedbackChannel,
    FeedbackError,
    FeedbackRequest,
    GroundTruthOracle,
    InteractiveOracle,
    UnknownEpisodeError,
    agent_feedback,
    ground_truth_feedback,
)
from navadapt.policy import EpisodeRollout
from navadapt.sal import AGENT_FALLBACK, HUMAN, EpisodeMemory, SelfHeadParams, self_predict
from navadapt.seeding import derive_seed


def line_world_and_task():
    world = hand_world([[0, 0], [4, 0], [8, 0]], [(0, 1), (1, 2)])
    task = Task(start=0, goal=2, instruction=np.zeros(3), success_radius=3.0, max_steps=10)
    return world, task


def test_ground_truth_feedback_clean():
    world, task = line_world_and_task()
    assert ground_truth_feedback(world, task, final_node=2)
    assert not ground_truth_feedback(world, task, final_node=0)
    # Truncation spoils an otherwise-successful endpoint.
    assert not ground_truth_feedback(world, task, final_node=2, stopped=False)


def test_ground_truth_feedback_full_noise_negates():
    world, task = line_world_and_task()
    for node in (0, 1, 2):
        clean = ground_truth_feedback(world, task, node)
        assert ground_truth_feedback(world, task, node, noise_rate=1.0, seed=7) == (not clean)


def test_ground_truth_feedback_noise_rate_monte_carlo():
    world, task = line_world_and_task()
    truth = ground_truth_feedback(world, task, 2)
    flips = sum(
        ground_truth_feedback(world, task, 2, noise_rate=0.5, seed=derive_seed("mc", i)) != truth
        for i in range(10_000)
    )
    assert 0.48 <= flips / 10_000 <= 0.52


def test_ground_truth_feedback_rejects_bad_rate():
    world, task = line_world_and_task()
    with pytest.raises(ValueError):
        ground_truth_feedback(world, task, 0, noise_rate=1.5)


def test_agent_feedback_delegates_to_self_predict():
    rng = np.random.default_rng(0)
    for _ in range(100):
        head = SelfHeadParams(w=rng.normal(size=5), b=float(rng.normal()))
        mem = EpisodeMemory(
            step_entropies=[0.1, 0.2],
            step_states=[rng.normal(size=5), rng.normal(size=5)],
            trajectory=[(0, 1), (1, 0)],
        )
        assert agent_feedback(head, mem) == self_predict(head, mem)


def make_request(episode_id: int, created_at: int = 1) -> FeedbackRequest:
    return FeedbackRequest(
        episode_id=episode_id,
        instruction=[0.0],
        trajectory_nodes=[0, 1],
        trajectory_positions=[[0.0, 0.0], [1.0, 0.0]],
        start=0,
        goal=1,
        stopped=True,
        mean_entropy=0.5,
        threshold=0.1,
        created_at=created_at,
    )


def test_channel_timeout_returns_none_then_late_response_conflicts():
    channel = FeedbackChannel()
    assert channel.request(make_request(0), timeout_s=0.05) is None
    with pytest.raises(DuplicateResponseError):
        channel.respond(0, True)


def test_channel_round_trip_and_pending_visibility():
    channel = FeedbackChannel()
    assert channel.pending() is None
    result = {}

    def run_side():
        result["response"] = channel.request(make_request(7), timeout_s=5.0)

    thread = threading.Thread(target=run_side)
    thread.start()
    deadline = time.monotonic() + 2.0
    while channel.pending() is None:
        assert time.monotonic() < deadline
        time.sleep(0.005)
    assert channel.pending().episode_id == 7
    channel.respond(7, True)
    thread.join(timeout=2.0)
    assert not thread.is_alive()
    assert result["response"].success is True
    assert result["response"].episode_id == 7
    assert channel.pending() is None


def test_channel_rejects_unknown_and_duplicate_responses():
    channel = FeedbackChannel()
    with pytest.raises(UnknownEpisodeError):
        channel.respond(99, True)

    got = {}

    def run_side():
        got["response"] = channel.request(make_request(1), timeout_s=5.0)

    thread = threading.Thread(target=run_side)
    thread.start()
    while channel.pending() is None:
        time.sleep(0.005)
    channel.respond(1, False)
    # A second answer for the same id loses, whether it lands before or after
    # the run loop wakes up.
    with pytest.raises((DuplicateResponseError, UnknownEpisodeError)):
        channel.respond(1, True)
    thread.join(timeout=2.0)
    assert got["response"].success is False


def test_channel_single_pending_request_invariant():
    channel = FeedbackChannel()

    def park():
        channel.request(make_request(1), timeout_s=1.0)

    thread = threading.Thread(target=park)
    thread.start()
    while channel.pending() is None:
        time.sleep(0.005)
    with pytest.raises(FeedbackError):
        channel.request(make_request(2), timeout_s=0.01)
    channel.respond(1, True)
    thread.join(timeout=2.0)


def fake_rollout(final_node: int, stopped: bool) -> EpisodeRollout:
    return EpisodeRollout(steps=[], nodes=[0, final_node], final_node=final_node, stopped=stopped)


def fake_memory() -> EpisodeMemory:
    return EpisodeMemory(step_entropies=[0.4], step_states=[np.zeros(2)], trajectory=[(0, 1)])


def test_interactive_oracle_timeout_falls_back_to_agent():
    world, task = line_world_and_task()
    oracle = InteractiveOracle(FeedbackChannel(), timeout_s=0.05)
    label, source = oracle.judge(
        world, task, fake_rollout(2, True), fake_memory(), episode_id=0, fallback=lambda: True
    )
    assert label is True
    assert source == AGENT_FALLBACK


def test_interactive_oracle_scripted_human_matches_ground_truth():
    world, task = line_world_and_task()
    channel = FeedbackChannel()
    oracle = InteractiveOracle(channel, timeout_s=5.0, threshold=0.1)
    truth_backend = GroundTruthOracle()

    def scripted_human():
        while channel.pending() is None:
            time.sleep(0.005)
        req = channel.pending()
        # Judge exactly like the simulator would: stopped within the radius.
        channel.respond(req.episode_id, req.stopped and req.trajectory_nodes[-1] == 2)

    episode = fake_rollout(2, True)
    thread = threading.Thread(target=scripted_human)
    thread.start()
    label, source = oracle.judge(world, task, episode, fake_memory(), 0, fallback=lambda: False)
    thread.join(timeout=2.0)
    expected, _ = truth_backend.judge(world, task, episode, fake_memory(), 0, lambda: False)
    assert label == expected
    assert source == HUMAN


def test_interactive_request_carries_trajectory_payload():
    world, task = line_world_and_task()
    channel = FeedbackChannel()
    oracle = InteractiveOracle(channel, timeout_s=0.5, threshold=0.25)
    seen = {}

    def capture():
        while channel.pending() is None:
            time.sleep(0.005)
        seen["request"] = channel.pending()
        channel.respond(seen["request"].episode_id, True)

    episode = EpisodeRollout(steps=[], nodes=[0, 1, 2], final_node=2, stopped=True)
    thread = threading.Thread(target=capture)
    thread.start()
    oracle.judge(world, task, episode, fake_memory(), episode_id=42, fallback=lambda: False)
    thread.join(timeout=2.0)

    req = seen["request"]
    assert req.episode_id == 42
    assert req.trajectory_nodes == [0, 1, 2]
    assert req.trajectory_positions == [[0.0, 0.0], [4.0, 0.0], [8.0, 0.0]]
    assert req.goal == 2 and req.start == 0
    assert req.threshold == 0.25
    assert req.created_at >= 1
