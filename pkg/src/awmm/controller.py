"""Per-task REINFORCE controllers that nudge the task logits.

Each of the five tasks owns an independent controller: a logit ``beta`` that
feeds the task-weight softmax and a 3-way categorical policy ``theta`` over
the moves ``(-0.2, 0, +0.2)`` applied to ``beta``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import TASKS
from .errors import StateError
from .model import WeightVector
from .numcore import OptimizerState, optimizer_step, softmax

ACTION_DELTAS = np.array([-0.2, 0.0, 0.2])
HOLD = 1  # index of the zero move

NO_BASELINE = "none"
MEAN_CENTER = "mean-center"
COMMIT_BEST = "best"
COMMIT_EXPECTED = "expected"


@dataclass
class ControllerState:
    task: str
    beta: float = 1.0
    theta: np.ndarray = field(default_factory=lambda: np.zeros(3))
    optimizer: OptimizerState = field(
        default_factory=lambda: OptimizerState("adam", learning_rate=1e-3))

    def policy(self) -> np.ndarray:
        return softmax(self.theta)


def make_controllers(beta_init: float = 1.0, learning_rate: float = 1e-3,
                     tasks=TASKS) -> list[ControllerState]:
    return [ControllerState(t, float(beta_init), np.zeros(3),
                            OptimizerState("adam", learning_rate=learning_rate))
            for t in tasks]


def weights_from_logits(betas) -> WeightVector:
    betas = np.asarray(betas, dtype=np.float64)
    if betas.shape != (len(TASKS),) or not np.all(np.isfinite(betas)):
        raise ValueError(f"need {len(TASKS)} finite logits, got {betas!r}")
    e = np.exp(betas - betas.max())
    return WeightVector(tuple(e / e.sum()))


def log_prob_grad(theta, action: int) -> np.ndarray:
    """Gradient of ``log softmax(theta)[action]`` with respect to ``theta``."""
    theta = np.asarray(theta, dtype=np.float64)
    if not 0 <= int(action) < theta.shape[0]:
        raise ValueError(f"action {action} out of range")
    g = -softmax(theta)
    g[int(action)] += 1.0
    return g


def tie_break(rewards) -> int:
    """Index of the largest reward; ties go to the lowest index."""
    rewards = np.asarray(rewards, dtype=np.float64)
    best = 0
    for j in range(1, rewards.shape[0]):
        if rewards[j] > rewards[best]:
            best = j
    return best


@dataclass
class EpisodeRecord:
    """One outer iteration: K sampled joint actions and what came of them."""

    iteration: int
    actions: np.ndarray | None  # [K x C] action indices, None for manual weighting
    log_probs: np.ndarray | None  # [K] joint log-probability
    betas: np.ndarray | None  # [K x C]
    alphas: np.ndarray  # [K x C] softmax of betas
    rewards: np.ndarray | None = None
    failed: list = field(default_factory=list)
    selected: int | None = None
    committed_beta: list | None = None

    @property
    def k(self) -> int:
        return int(self.alphas.shape[0])

    def weight_vectors(self) -> list[WeightVector]:
        return [WeightVector(tuple(a)) for a in self.alphas]

    def to_dict(self) -> dict:
        def lst(x):
            return None if x is None else np.asarray(x).tolist()
        return {
            "iteration": self.iteration,
            "actions": lst(self.actions),
            "delta_beta": None if self.actions is None else ACTION_DELTAS[self.actions].tolist(),
            "log_probs": lst(self.log_probs),
            "betas": lst(self.betas),
            "alphas": lst(self.alphas),
            "rewards": lst(self.rewards),
            "failed": list(self.failed),
            "selected": self.selected,
            "committed_beta": self.committed_beta,
        }


def sample_actions(controllers: list[ControllerState], k: int, rng: np.random.Generator,
                   iteration: int = 0, frozen: bool = False) -> EpisodeRecord:
    """Draw ``k`` joint moves and the task weights they lead to.

    With ``frozen`` every controller holds (zero move) and no randomness is used.
    """
    if k < 1:
        raise ValueError("K must be >= 1")
    c = len(controllers)
    actions = np.full((k, c), HOLD, dtype=np.int64)
    logp = np.zeros(k)
    if not frozen:
        for i, ctl in enumerate(controllers):
            p = ctl.policy()
            u = rng.random(k)
            a = np.minimum(np.searchsorted(np.cumsum(p), u, side="right"), len(p) - 1)
            actions[:, i] = a
            logp += np.log(p[a])
    base = np.array([ctl.beta for ctl in controllers])
    betas = base + ACTION_DELTAS[actions]
    if c == len(TASKS):
        alphas = np.array([weights_from_logits(b).values for b in betas])
    else:
        alphas = softmax(betas)
    return EpisodeRecord(iteration, actions, logp, betas, alphas)


def centered_rewards(rewards: np.ndarray, baseline: str) -> np.ndarray:
    rewards = np.asarray(rewards, dtype=np.float64)
    if baseline == NO_BASELINE:
        return rewards
    if baseline != MEAN_CENTER:
        raise ValueError(f"unknown baseline {baseline!r}")
    k = rewards.shape[0]
    if k == 1 or np.all(rewards == rewards[0]):
        return np.zeros(k)
    # leave-one-out mean keeps the estimator unbiased
    return k / (k - 1) * (rewards - rewards.mean())


def policy_gradient(controllers: list[ControllerState], episode: EpisodeRecord,
                    baseline: str = MEAN_CENTER) -> list[np.ndarray]:
    """Per-controller REINFORCE estimate ``1/K sum_j R_j grad log p(a_ij)``."""
    if episode.rewards is None or len(episode.rewards) != episode.k:
        raise StateError("episode is missing rewards")
    r = centered_rewards(episode.rewards, baseline)
    k = episode.k
    grads = []
    for i, ctl in enumerate(controllers):
        pi = ctl.policy()
        onehot = np.zeros((k, pi.shape[0]))
        onehot[np.arange(k), episode.actions[:, i]] = 1.0
        grads.append((r[:, None] * (onehot - pi)).sum(axis=0) / k)
    return grads


def reinforce_update(controllers: list[ControllerState], episode: EpisodeRecord,
                     eta: float | None = None, baseline: str = MEAN_CENTER,
                     commit: str = COMMIT_BEST, frozen: bool = False) -> list[ControllerState]:
    """Adam ascent on each policy, then commit the new logits (in place)."""
    if episode.rewards is None or len(episode.rewards) != episode.k:
        raise StateError("episode is missing rewards")
    if episode.selected is None:
        episode.selected = tie_break(episode.rewards)
    old_policies = [ctl.policy() for ctl in controllers]
    if not frozen:
        grads = policy_gradient(controllers, episode, baseline)
        for ctl, g in zip(controllers, grads):
            if eta is not None:
                ctl.optimizer.learning_rate = eta
            params = {"theta": ctl.theta}
            optimizer_step(params, {"theta": -g}, ctl.optimizer)
    for i, ctl in enumerate(controllers):
        if commit == COMMIT_BEST:
            ctl.beta = float(episode.betas[episode.selected, i])
        elif commit == COMMIT_EXPECTED:
            ctl.beta = float(ctl.beta + old_policies[i] @ ACTION_DELTAS)
        else:
            raise ValueError(f"unknown commit rule {commit!r}")
    episode.committed_beta = [ctl.beta for ctl in controllers]
    return controllers
