"""Episode metrics and run-level aggregation."""

import numpy as np
import pytest
from conftest import hand_world

from navadapt.envgraph import Task, generate_task, generate_world
from navadapt.metrics import ConfusionMatrix, RunReport, aggregate, episode_metrics
from navadapt.policy import init_params, rollout_episode


def line_setup():
    # Four nodes in a line, 5 m apart; start 0, goal 3, radius 3.
    world = hand_world([[0, 0], [5, 0], [10, 0], [15, 0]], [(0, 1), (1, 2), (2, 3)])
    task = Task(start=0, goal=3, instruction=np.zeros(3), success_radius=3.0, max_steps=10)
    return world, task


def test_optimal_path_metrics():
    world, task = line_setup()
    m = episode_metrics(world, task, [0, 1, 2, 3], stopped=True)
    assert m.tl == pytest.approx(15.0)
    assert m.ne == 0.0
    assert m.success and m.oracle_success
    assert m.spl_term == pytest.approx(1.0)


def test_spl_penalizes_detours():
    world, task = line_setup()
    m = episode_metrics(world, task, [0, 1, 0, 1, 2, 3], stopped=True)
    assert m.tl == pytest.approx(25.0)
    assert m.success
    assert m.spl_term == pytest.approx(15.0 / 25.0)


def test_spl_formula_example():
    # S=1, L*=10, L=12 -> 10/12.
    world = hand_world([[0, 0], [10, 0], [10, 2]], [(0, 1), (1, 2)])
    task = Task(start=0, goal=1, instruction=np.zeros(3), success_radius=3.0, max_steps=10)
    m = episode_metrics(world, task, [0, 1, 2], stopped=True)
    assert m.tl == pytest.approx(12.0)
    assert m.ne == pytest.approx(2.0)
    assert m.success
    assert m.spl_term == pytest.approx(10.0 / 12.0)


def test_truncation_blocks_success_but_not_oracle_success():
    world, task = line_setup()
    m = episode_metrics(world, task, [0, 1, 2, 3], stopped=False)
    assert not m.success
    assert m.oracle_success
    assert m.spl_term == 0.0
    assert m.ne == 0.0


def test_failure_far_from_goal():
    world, task = line_setup()
    m = episode_metrics(world, task, [0, 1], stopped=True)
    assert not m.success and not m.oracle_success
    assert m.ne == pytest.approx(10.0)
    assert m.spl_term == 0.0


def test_oracle_success_from_passing_through():
    world, task = line_setup()
    m = episode_metrics(world, task, [0, 1, 2, 3, 2], stopped=True)
    assert not m.success  # stopped 5 m away
    assert m.oracle_success  # but walked through the goal
    assert m.ne == pytest.approx(5.0)


def test_trajectory_contract_violations():
    world, task = line_setup()
    with pytest.raises(ValueError):
        episode_metrics(world, task, [], stopped=True)
    with pytest.raises(ValueError):
        episode_metrics(world, task, [1, 2], stopped=True)
    with pytest.raises(ValueError):
        episode_metrics(world, task, [0, 2], stopped=True)  # not an edge


def test_metric_invariants_on_random_rollouts():
    for seed in range(30):
        world = generate_world(seed % 5, n_nodes=25, feature_dim=5)
        task = generate_task(world, seed + 30)
        params = init_params(seed, hidden_dim=6, feature_dim=5)
        ep = rollout_episode(params, world, task)
        m = episode_metrics(world, task, ep.nodes, ep.stopped)
        assert m.success <= m.oracle_success
        assert m.spl_term <= (1.0 if m.success else 0.0)
        assert m.tl >= 0.0 and m.ne >= 0.0


def record(success=False, oracle=False, spl=0.0, tl=10.0, ne=5.0, source="agent", steps=4, pred=None, truth=False):
    return {
        "success": success,
        "oracle_success": oracle,
        "spl_term": spl,
        "tl": tl,
        "ne": ne,
        "source": source,
        "steps": steps,
        "self_prediction": pred,
        "true_success": truth,
    }


def test_aggregate_basic_ratios():
    records = [
        record(success=True, oracle=True, spl=1.0, source="human", steps=10),
        record(success=False, oracle=True, source="agent", steps=2),
        record(success=True, oracle=True, spl=0.5, source="human", steps=8),
        record(success=False, oracle=False, source="agent", steps=2),
        record(success=False, oracle=False, source="agent(fallback)", steps=2),
    ]
    rep = aggregate(records)
    assert rep.n_episodes == 5
    assert rep.sr == pytest.approx(40.0)
    assert rep.osr == pytest.approx(60.0)
    assert rep.spl == pytest.approx(30.0)
    assert rep.active_episode_ratio == pytest.approx(0.4)
    assert rep.active_step_ratio == pytest.approx(18.0 / 24.0)
    assert rep.confusion.total == 0
    assert rep.confusion.accuracy_pct is None


def test_aggregate_outcome_example():
    records = [record(success=True), record(success=False), record(success=True)]
    assert aggregate(records).sr == pytest.approx(100.0 * 2 / 3)


def test_aggregate_confusion_matrix():
    records = [
        record(pred=True, truth=True),
        record(pred=True, truth=False),
        record(pred=False, truth=False),
        record(pred=False, truth=True),
        record(pred=True, truth=True),
        record(pred=None),
    ]
    rep = aggregate(records)
    assert rep.confusion == ConfusionMatrix(tp=2, fp=1, tn=1, fn=1)
    assert rep.confusion.total == 5
    assert rep.confusion.accuracy_pct == pytest.approx(60.0)


def test_aggregate_permutation_invariant():
    rng = np.random.default_rng(0)
    records = [
        record(
            success=bool(rng.integers(2)),
            oracle=True,
            spl=float(rng.uniform(0, 1)),
            tl=float(rng.uniform(5, 50)),
            ne=float(rng.uniform(0, 20)),
            source="human" if rng.integers(2) else "agent",
            steps=int(rng.integers(1, 20)),
            pred=bool(rng.integers(2)),
            truth=bool(rng.integers(2)),
        )
        for _ in range(40)
    ]
    base = aggregate(records)
    shuffled = list(records)
    rng.shuffle(shuffled)
    other = aggregate(shuffled)
    assert other.confusion == base.confusion
    assert other.n_episodes == base.n_episodes
    for field in ("sr", "osr", "spl", "tl_mean", "ne_mean", "active_episode_ratio", "active_step_ratio"):
        assert getattr(other, field) == pytest.approx(getattr(base, field), rel=1e-12)


def test_aggregate_rejects_empty():
    with pytest.raises(ValueError):
        aggregate([])


def test_csv_row_matches_header_width():
    rep = aggregate([record(success=True, spl=0.8, pred=True, truth=True)])
    assert len(rep.csv_row()) == len(RunReport.csv_header())
