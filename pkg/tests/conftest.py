"""Shared test utilities: finite-difference oracles and episode builders."""

import numpy as np

from navadapt.envgraph import Candidate, GraphWorld, Observation
from navadapt.policy import (
    EpisodeRollout,
    HiddenState,
    PolicyGradient,
    PolicyParams,
    StepRecord,
    action_distribution,
    candidate_matrix,
    encode,
)


def make_obs(rng: np.random.Generator, feature_dim: int, n_candidates: int) -> Observation:
    """Random observation with STOP at index 0, like the environment builds."""
    stop = Candidate(node_id=0, features=rng.normal(size=feature_dim), length=0.0)
    moves = tuple(
        Candidate(
            node_id=i,
            features=rng.normal(size=feature_dim),
            length=float(rng.uniform(1.0, 10.0)),
        )
        for i in range(1, n_candidates)
    )
    return Observation(current=0, candidates=(stop,) + moves, step_index=0)


def random_contexts(rng: np.random.Generator, n_steps: int, feature_dim: int):
    """(instruction, obs, history_mean) tuples for replaying forward passes."""
    return [
        (
            rng.normal(size=feature_dim),
            make_obs(rng, feature_dim, int(rng.integers(2, 6))),
            rng.normal(size=feature_dim) * 0.5,
        )
        for _ in range(n_steps)
    ]


def replay_steps(params: PolicyParams, contexts, actions) -> list[StepRecord]:
    """Forward pass over fixed contexts with pinned actions; fresh caches."""
    steps = []
    for (instruction, obs, hist), action in zip(contexts, actions):
        hidden = encode(params, instruction, obs, hist)
        cand = candidate_matrix(obs)
        dist = action_distribution(params, hidden, cand)
        steps.append(
            StepRecord(
                node=obs.current,
                action=action,
                hidden=hidden,
                cand=cand,
                logits=dist.logits,
                probs=dist.probs,
                history_mean=hist,
            )
        )
    return steps


def replay_episode(params: PolicyParams, contexts, actions, stopped=True) -> EpisodeRollout:
    steps = replay_steps(params, contexts, actions)
    return EpisodeRollout(steps=steps, nodes=[0], final_node=0, stopped=stopped)


def fd_param_grad(loss_fn, params: PolicyParams, eps: float = 1e-4) -> PolicyGradient:
    """Central finite differences of a scalar loss over every parameter entry."""
    grads = []
    for name in ("w_enc", "b_enc", "w_act"):
        base = getattr(params, name)
        grad = np.zeros_like(base)
        flat, gflat = base.ravel(), grad.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_fn(params)
            flat[i] = orig - eps
            down = loss_fn(params)
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * eps)
        grads.append(grad)
    return PolicyGradient(*grads)


def grad_rel_error(analytic: PolicyGradient, expected: PolicyGradient) -> float:
    a = np.concatenate([analytic.w_enc.ravel(), analytic.b_enc, analytic.w_act.ravel()])
    e = np.concatenate([expected.w_enc.ravel(), expected.b_enc, expected.w_act.ravel()])
    denom = max(float(np.linalg.norm(e)), 1e-12)
    return float(np.linalg.norm(a - e)) / denom


def fake_episode(probs_list, actions, stopped=True) -> EpisodeRollout:
    """Episode whose steps carry only probs/actions (enough for loss math)."""
    steps = []
    for p, a in zip(probs_list, actions):
        p = np.asarray(p, dtype=float)
        dummy = HiddenState(s=np.zeros(2), x=np.zeros(2), z=np.zeros(2))
        with np.errstate(divide="ignore"):
            logits = np.log(p)
        steps.append(
            StepRecord(
                node=0,
                action=a,
                hidden=dummy,
                cand=np.zeros((p.size, 3)),
                logits=logits,
                probs=p,
                history_mean=np.zeros(1),
            )
        )
    return EpisodeRollout(steps=steps, nodes=[0], final_node=0, stopped=stopped)


def random_simplex(rng: np.random.Generator, k: int) -> np.ndarray:
    """Softmax of random logits: strictly positive, sums to 1."""
    logits = rng.normal(scale=2.0, size=k)
    e = np.exp(logits - logits.max())
    return e / e.sum()


def hand_world(positions, edges, feature_dim: int = 3) -> GraphWorld:
    """World with explicit geometry; edge lengths are euclidean distances."""
    pos = np.asarray(positions, dtype=float)
    return GraphWorld(
        positions=pos,
        features=np.zeros((len(pos), feature_dim)),
        edges=tuple((u, v, float(np.linalg.norm(pos[u] - pos[v]))) for u, v in edges),
        seed=0,
    )
