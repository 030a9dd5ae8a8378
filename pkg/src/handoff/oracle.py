"""Reference gating policies trained by RL on the test-time coordination MDP.

These gates need the real expert and the test distribution, so they are
diagnostics, not contenders: they mark the attainable ceiling, and swapping
them in for either the candidate proposer or the validator localizes which
component limits a method.  One gate is trained per penalty level; its input
is any nonempty combination of the raw observation, the novice's hidden
features, and the novice's softmax distribution.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coord import DECISIONS, CoordEnv, PenaltyConfig, PolicyStats, episode_task
from .gridworld import TaskDistribution
from .metric import AucReport, alpha_grid
from .policy import PolicyParams, TrainBudget, forward, sample_index, train_episodic
from .scores import FeatureBundle, all_selectors, concat_features, normalize_selector, selector_key
from .seeding import derive_rng, derive_seed

__all__ = [
    "GatePolicy",
    "PerAlphaOracle",
    "all_selectors",
    "concat_features",
    "train_rl_oracle",
    "train_oracle_grid",
    "best_oracle",
    "diagnose_components",
]


@dataclass(frozen=True)
class GatePolicy:
    """Learned binary gate over concatenated novice features, tied to one alpha."""

    params: PolicyParams
    selector: tuple[str, ...]
    alpha: float

    @property
    def kind(self) -> str:
        return "learned"

    @property
    def param(self) -> float:
        return self.alpha

    def decide(self, bundle: FeatureBundle, rng: np.random.Generator) -> str:
        out = forward(self.params, concat_features(bundle, self.selector))
        return DECISIONS[sample_index(out.dist, rng)]

    def describe(self) -> dict:
        return {"kind": "learned", "selector": list(self.selector), "alpha": self.alpha}


@dataclass(frozen=True)
class PerAlphaOracle:
    """One gate per penalty row; evaluation resolves the row's gate by index."""

    gates: tuple[GatePolicy, ...]
    selector: tuple[str, ...]

    @property
    def kind(self) -> str:
        return "learned"

    def for_alpha_index(self, row: int) -> GatePolicy:
        return self.gates[row]

    def decide(self, bundle: FeatureBundle, rng: np.random.Generator) -> str:
        raise RuntimeError("per-alpha oracle must be resolved to one penalty row before use")

    def describe(self) -> dict:
        return {
            "kind": "learned",
            "selector": list(self.selector),
            "alphas": [g.alpha for g in self.gates],
        }


class _GateEpisode:
    """CoordEnv viewed as a 2-action episode over concatenated features."""

    def __init__(self, env: CoordEnv, selector: tuple[str, ...], penalty: PenaltyConfig, act_rng):
        self._env = env
        self._selector = selector
        self._penalty = penalty
        self._act_rng = act_rng

    def reset(self) -> np.ndarray:
        return concat_features(self._env.reset(), self._selector)

    def step(self, action: int) -> tuple[np.ndarray, float, bool]:
        res = self._env.step(DECISIONS[action], self._penalty, self._act_rng)
        return concat_features(res.bundle, self._selector), res.reward, res.done


def train_rl_oracle(
    selector,
    alpha: float,
    test_dist: TaskDistribution,
    novice: PolicyParams,
    expert: PolicyParams,
    stats: PolicyStats,
    budget: TrainBudget,
    window_radius: int = 3,
    hidden_dim: int = 32,
) -> GatePolicy:
    """Policy-gradient training of one gate on the alpha-penalized wrapper."""
    selector = normalize_selector(selector)
    penalty = PenaltyConfig(alpha, stats.mean_return, stats.mean_length)

    def make_episode(ep: int) -> _GateEpisode:
        task = episode_task(test_dist, budget.seed, ep)
        env = CoordEnv(task, novice, expert, window_radius)
        return _GateEpisode(env, selector, penalty, derive_rng(budget.seed, "env-act", ep))

    probe = CoordEnv(episode_task(test_dist, budget.seed, 0), novice, expert, window_radius)
    obs_dim = len(concat_features(probe.reset(), selector))
    params = train_episodic(make_episode, obs_dim, 2, budget, hidden_dim=hidden_dim)
    params.meta["selector"] = list(selector)
    params.meta["alpha"] = alpha
    return GatePolicy(params=params, selector=selector, alpha=alpha)


def train_oracle_grid(
    selector,
    k_levels: int,
    test_dist: TaskDistribution,
    novice: PolicyParams,
    expert: PolicyParams,
    stats: PolicyStats,
    episodes: int,
    learning_rate: float,
    discount: float,
    entropy_bonus: float,
    seed: int,
    window_radius: int = 3,
    hidden_dim: int = 32,
) -> PerAlphaOracle:
    """Train one gate per penalty level, each on its own derived seed."""
    selector = normalize_selector(selector)
    gates = []
    for i, alpha in enumerate(alpha_grid(k_levels)):
        budget = TrainBudget(
            episodes=episodes,
            learning_rate=learning_rate,
            discount=discount,
            entropy_bonus=entropy_bonus,
            seed=derive_seed(seed, "oracle", selector_key(selector), i),
        )
        gates.append(
            train_rl_oracle(
                selector, float(alpha), test_dist, novice, expert, stats, budget,
                window_radius, hidden_dim,
            )
        )
    return PerAlphaOracle(gates=tuple(gates), selector=selector)


def best_oracle(reports: dict[str, AucReport]) -> tuple[str, AucReport]:
    """Best selector by AUC mean; deterministic tie-break on the selector key."""
    key = min(reports, key=lambda s: (-reports[s].mean, s))
    return key, reports[key]


def diagnose_components(
    candidate_test_reports: list[AucReport],
    simulated_pick: int,
    oracle_proposer_report: AucReport,
) -> tuple[AucReport, AucReport, AucReport]:
    """Assemble the three-way component diagnosis from frozen test reports.

    Returns (method as selected by the simulated validator, the same candidate
    set re-selected by the oracle validator, the learned oracle proposer).
    The middle report is the argmax over the same frozen reports, so it can
    never fall below the first.
    """
    if not candidate_test_reports:
        raise ValueError("no candidate reports to diagnose")
    oracle_pick = max(range(len(candidate_test_reports)), key=lambda i: (candidate_test_reports[i].mean, -i))
    return (
        candidate_test_reports[simulated_pick],
        candidate_test_reports[oracle_pick],
        oracle_proposer_report,
    )
