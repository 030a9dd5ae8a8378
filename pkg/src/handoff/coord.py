"""Coordination wrapper: binary novice/expert action space with a penalized reward.

Each wrapped step executes one base-environment action drawn from whichever
policy currently holds control, then charges the per-step help price
alpha * Ge / Te whenever the expert acted:

    r(alpha) = R(s, a) - 1{expert acted} * alpha * Ge / Te

where (Ge, Te) are the expert's mean return and mean episode length on its
own distribution.  The feature bundle handed to the coordination policy is
always computed from the novice's forward pass, never the expert's.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gridworld import GridEnv, TaskDistribution, TaskSpec, sample_task
from .policy import PolicyParams, forward, sample_index
from .scores import FeatureBundle
from .seeding import derive_rng, derive_seed

NOVICE = "novice"
EXPERT = "expert"
DECISIONS = (NOVICE, EXPERT)


@dataclass(frozen=True)
class PenaltyConfig:
    """Help price: each expert-controlled step costs alpha * Ge / Te reward."""

    alpha: float
    expert_mean_return: float
    expert_mean_length: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.expert_mean_return < 0.0:
            raise ValueError("expert_mean_return must be >= 0")
        if not self.expert_mean_length > 0.0:
            raise ValueError("expert_mean_length must be > 0")

    @property
    def per_step_penalty(self) -> float:
        return self.alpha * self.expert_mean_return / self.expert_mean_length


@dataclass
class CoordStepResult:
    bundle: FeatureBundle
    reward: float
    done: bool
    acted: str
    env_action: int


def _bundle_from(params: PolicyParams, obs: np.ndarray) -> FeatureBundle:
    out = forward(params, obs)
    return FeatureBundle(obs=obs, hidden=out.hidden, dist=out.dist, logits=out.logits)


class CoordEnv:
    """Single-owner wrapper pairing one task episode with a novice and an expert."""

    def __init__(
        self,
        task: TaskSpec,
        novice: PolicyParams,
        expert: PolicyParams,
        window_radius: int = 3,
    ):
        self._env = GridEnv(task, window_radius)
        if novice.obs_dim != self._env.obs_dim or expert.obs_dim != self._env.obs_dim:
            raise ValueError(
                f"policy obs_dim (novice {novice.obs_dim}, expert {expert.obs_dim}) "
                f"does not match environment obs_dim {self._env.obs_dim}"
            )
        self._novice = novice
        self._expert = expert
        self._bundle: FeatureBundle | None = None

    @property
    def steps_taken(self) -> int:
        return self._env.steps_taken

    @property
    def done(self) -> bool:
        return self._env.done

    def reset(self) -> FeatureBundle:
        obs = self._env.reset()
        self._bundle = _bundle_from(self._novice, obs)
        return self._bundle

    def step(self, decision: str, penalty: PenaltyConfig, rng: np.random.Generator) -> CoordStepResult:
        if self._bundle is None:
            raise RuntimeError("reset() must be called before step()")
        if decision not in DECISIONS:
            raise ValueError(f"decision must be one of {DECISIONS}, got {decision!r}")
        if decision == NOVICE:
            dist = self._bundle.dist  # novice forward pass already done for the bundle
        else:
            dist = forward(self._expert, self._bundle.obs).dist
        action = sample_index(dist, rng)
        res = self._env.step(action)
        reward = res.reward
        if decision == EXPERT:
            reward -= penalty.per_step_penalty
        self._bundle = _bundle_from(self._novice, res.observation)
        return CoordStepResult(
            bundle=self._bundle,
            reward=reward,
            done=res.done,
            acted=decision,
            env_action=action,
        )


# ---------------------------------------------------------------------------
# Shared per-episode seed plumbing (keeps evaluation paired across policies
# and across penalty levels: episode j always sees the same task and the same
# action stream).
# ---------------------------------------------------------------------------

def episode_task(dist: TaskDistribution, master: int, episode: int) -> TaskSpec:
    return sample_task(dist, derive_seed(master, "task", episode))


def episode_action_rng(master: int, episode: int) -> np.random.Generator:
    return derive_rng(master, "rollout", episode)


def episode_decision_rng(master: int, episode: int) -> np.random.Generator:
    return derive_rng(master, "decide", episode)


@dataclass(frozen=True)
class PolicyStats:
    mean_return: float
    mean_length: float


def estimate_policy_stats(
    policy: PolicyParams,
    dist: TaskDistribution,
    n_episodes: int,
    seed: int,
    window_radius: int = 3,
) -> PolicyStats:
    """Empirical mean return and mean episode length over seeded solo rollouts."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    returns = np.empty(n_episodes)
    lengths = np.empty(n_episodes)
    for ep in range(n_episodes):
        env = GridEnv(episode_task(dist, seed, ep), window_radius)
        rng = episode_action_rng(seed, ep)
        obs = env.reset()
        total = 0.0
        while True:
            out = forward(policy, obs)
            res = env.step(sample_index(out.dist, rng))
            total += res.reward
            obs = res.observation
            if res.done:
                break
        returns[ep] = total
        lengths[ep] = env.steps_taken
    return PolicyStats(float(returns.mean()), float(lengths.mean()))


def collect_decision_bundles(
    policy: PolicyParams,
    dist: TaskDistribution,
    n_episodes: int,
    seed: int,
    window_radius: int = 3,
) -> list[FeatureBundle]:
    """Bundles at every state where the policy chose an action, across episodes."""
    bundles: list[FeatureBundle] = []
    for ep in range(n_episodes):
        env = GridEnv(episode_task(dist, seed, ep), window_radius)
        rng = episode_action_rng(seed, ep)
        obs = env.reset()
        while True:
            out = forward(policy, obs)
            bundles.append(FeatureBundle(obs=obs, hidden=out.hidden, dist=out.dist, logits=out.logits))
            res = env.step(sample_index(out.dist, rng))
            obs = res.observation
            if res.done:
                break
    return bundles
