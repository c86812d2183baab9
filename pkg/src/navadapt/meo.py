"""Mixture entropy optimization.

The policy's own greedy pick is promoted to a pseudo-expert: a one-hot at the
selected action is blended with the policy distribution, and the entropy of
that mixture - averaged over the episode, STOP step included - becomes the
per-episode loss. Episodic feedback only flips its sign: minimized when the
episode succeeded, maximized when it failed. Gradients are exact and treat
both the one-hot and the selection itself as constants (argmax is not
differentiated through).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .policy import (
    ActionDistribution,
    EpisodeRollout,
    PolicyGradient,
    PolicyParams,
    backward,
)


@dataclass(frozen=True)
class EpisodeEntropy:
    """Per-step mixture entropies (nats) and their mean."""

    per_step_mix_entropy: list[float]
    mean: float


def _probs(dist) -> np.ndarray:
    """Accept an ActionDistribution or a bare probability vector."""
    p = np.asarray(getattr(dist, "probs", dist), dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("expected a 1-d probability vector")
    return p


def mixture_distribution(dist, selected: int, lam: float) -> ActionDistribution:
    """q_mix = lam * one_hot(selected) + (1 - lam) * pi.

    The caller anchors `selected` at the policy argmax; this function does not
    re-derive it (gradient checks deliberately hold it fixed while perturbing
    parameters). The returned probs are the exact convex combination; logits
    are their logs, with -inf for zero entries.
    """
    p = _probs(dist)
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must be in [0, 1], got {lam}")
    if not 0 <= selected < p.size:
        raise IndexError(f"selected index {selected} out of range")
    q = (1.0 - lam) * p
    q[selected] += lam
    with np.errstate(divide="ignore"):
        logits = np.log(q)
    return ActionDistribution(logits=logits, probs=q)


def entropy(dist) -> float:
    """Shannon entropy in nats, with 0 * ln 0 := 0."""
    p = _probs(dist)
    pos = p[p > 0.0]
    return float(-(pos * np.log(pos)).sum())


def episode_mixture_entropy(episode: EpisodeRollout, lam: float) -> EpisodeEntropy:
    """Mixture entropy at every recorded step plus the episode mean."""
    if not episode.steps:
        raise ValueError("episode has no steps")
    per_step = [
        entropy(mixture_distribution(st.probs, st.action, lam)) for st in episode.steps
    ]
    return EpisodeEntropy(per_step_mix_entropy=per_step, mean=float(np.mean(per_step)))


def mixture_loss(episode: EpisodeRollout, lam: float, success: bool) -> float:
    """Outcome-signed mean mixture entropy.

    Written in the two-term indicator form on purpose; the algebraically
    equal (2 * indicator - 1) * mean form is covered by a test, not used here.
    """
    indicator = 1.0 if success else 0.0
    h_mean = episode_mixture_entropy(episode, lam).mean
    return indicator * h_mean - (1.0 - indicator) * h_mean


def mixture_entropy_dlogits(probs: np.ndarray, selected: int, lam: float) -> np.ndarray:
    """d H(q_mix) / d logits for one step.

    With q = lam * one_hot + (1 - lam) * p and p = softmax(logits):
    dH/dlogit_c = -(1 - lam) * p_c * (ln q_c - E_p[ln q]). At lam = 1 the
    mixture is constant in the logits and the gradient is exactly zero.
    """
    p = _probs(probs)
    if lam == 1.0:
        return np.zeros_like(p)
    q = mixture_distribution(p, selected, lam).probs
    out = np.zeros_like(p)
    pos = p > 0.0
    ln_q = np.log(q[pos])
    expected = float(p[pos] @ ln_q)
    out[pos] = -(1.0 - lam) * p[pos] * (ln_q - expected)
    return out


def mixture_step_dlogits(
    episode: EpisodeRollout, lam: float, success: bool
) -> list[np.ndarray]:
    """Per-step dL_mix/dlogits for the signed episode-mean loss."""
    if not episode.steps:
        raise ValueError("episode has no steps")
    sign = 1.0 if success else -1.0
    scale = sign / len(episode.steps)
    return [scale * mixture_entropy_dlogits(st.probs, st.action, lam) for st in episode.steps]


def mixture_loss_gradient(
    params: PolicyParams, episode: EpisodeRollout, lam: float, success: bool
) -> PolicyGradient:
    """Exact parameter gradient of mixture_loss via the policy backward pass."""
    return backward(params, episode.steps, d_logits=mixture_step_dlogits(episode, lam, success))
