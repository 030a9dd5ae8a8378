"""Candidate coordination policies: threshold grids, Random(p), and constants.

Threshold candidates come from an adaptive percentile grid: roll the weakened
novice on training tasks, pool the confidence score of every decision state,
and take the 0th, 10th, ..., 100th nearest-rank percentiles as thresholds.
A threshold policy yields control (picks the expert) whenever the score falls
below its threshold.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .coord import EXPERT, NOVICE, collect_decision_bundles
from .gridworld import TaskDistribution
from .policy import PolicyParams
from .scores import (
    LOGIT_MEASURES,
    FeatureBundle,
    SvddModel,
    score,
    train_svdd,
)
from .seeding import derive_seed

PERCENTILE_STEPS = tuple(range(0, 101, 10))
DEFAULT_PROPOSAL_EPISODES = 64


class CandidateGenerationError(RuntimeError):
    """The rollout produced an empty score pool."""


@dataclass(frozen=True)
class ThresholdPolicy:
    """Yield to the expert when the confidence score drops below tau."""

    measure: str
    tau: float
    source_role: str = "weakened"  # which novice's outputs feed the score
    svdd: SvddModel | None = None

    @property
    def kind(self) -> str:
        return "threshold"

    @property
    def param(self) -> float:
        return self.tau

    def decide(self, bundle: FeatureBundle, rng: np.random.Generator) -> str:
        return EXPERT if score(self.measure, bundle, self.svdd) < self.tau else NOVICE

    def describe(self) -> dict:
        return {
            "kind": "threshold",
            "measure": self.measure,
            "tau": self.tau,
            "source_role": self.source_role,
        }

    def with_source_role(self, role: str) -> "ThresholdPolicy":
        return replace(self, source_role=role)


@dataclass(frozen=True)
class RandomPolicy:
    """Pick the expert with probability exactly p, from its own decision stream."""

    p: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must be in [0, 1], got {self.p}")

    @property
    def kind(self) -> str:
        return "random"

    @property
    def param(self) -> float:
        return self.p

    def decide(self, bundle: FeatureBundle, rng: np.random.Generator) -> str:
        return EXPERT if rng.random() < self.p else NOVICE

    def describe(self) -> dict:
        return {"kind": "random", "p": self.p}


@dataclass(frozen=True)
class ConstantPolicy:
    choice: str

    def __post_init__(self) -> None:
        if self.choice not in (NOVICE, EXPERT):
            raise ValueError(f"choice must be novice or expert, got {self.choice!r}")

    @property
    def kind(self) -> str:
        return f"always-{self.choice}"

    @property
    def param(self) -> float:
        return 0.0 if self.choice == NOVICE else 1.0

    def decide(self, bundle: FeatureBundle, rng: np.random.Generator) -> str:
        return self.choice

    def describe(self) -> dict:
        return {"kind": self.kind}


BASELINE_KINDS = ("always-novice", "always-expert", "always-random-0.5")


def make_baseline(kind: str):
    if kind == "always-novice":
        return ConstantPolicy(NOVICE)
    if kind == "always-expert":
        return ConstantPolicy(EXPERT)
    if kind == "always-random-0.5":
        return RandomPolicy(0.5)
    raise ValueError(f"unknown baseline kind {kind!r}")


@dataclass(frozen=True)
class CandidateSet:
    policies: tuple
    provenance: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.policies:
            raise ValueError("candidate set must be nonempty")

    def __len__(self) -> int:
        return len(self.policies)


def nearest_rank_percentile(sorted_pool: np.ndarray, q: int) -> float:
    """Nearest-rank percentile of an ascending pool; q = 0 maps to the minimum."""
    if not 0 <= q <= 100:
        raise ValueError(f"percentile must be in [0, 100], got {q}")
    if q == 0:
        return float(sorted_pool[0])
    rank = math.ceil(q / 100.0 * len(sorted_pool))
    return float(sorted_pool[rank - 1])


def percentile_thresholds(pool: np.ndarray) -> list[float]:
    pool = np.asarray(pool, dtype=np.float64)
    if pool.size == 0:
        raise CandidateGenerationError("empty score pool")
    sorted_pool = np.sort(pool)
    return [nearest_rank_percentile(sorted_pool, q) for q in PERCENTILE_STEPS]


def gen_threshold_candidates(
    measure: str,
    weakened_novice: PolicyParams,
    train_dist: TaskDistribution,
    n_episodes: int = DEFAULT_PROPOSAL_EPISODES,
    seed: int = 0,
    window_radius: int = 3,
    svdd_selector=("hidden",),
    svdd_options: dict | None = None,
) -> CandidateSet:
    """Percentile threshold grid from weakened-novice rollouts on training tasks.

    For the svdd measure the same rollout data first fits the detector, then
    supplies the score pool.
    """
    if measure not in LOGIT_MEASURES and measure != "svdd":
        raise ValueError(f"unknown measure {measure!r}")
    bundles = collect_decision_bundles(
        weakened_novice, train_dist, n_episodes, derive_seed(seed, "proposal-rollout"), window_radius
    )
    if not bundles:
        raise CandidateGenerationError("rollout produced no decision states")

    model = None
    if measure == "svdd":
        model = train_svdd(
            bundles, selector=svdd_selector, seed=derive_seed(seed, "svdd-train"), **(svdd_options or {})
        )
    pool = np.array([score(measure, b, model) for b in bundles])
    thresholds = percentile_thresholds(pool)
    policies = tuple(
        ThresholdPolicy(measure=measure, tau=tau, source_role="weakened", svdd=model)
        for tau in thresholds
    )
    provenance = {
        "measure": measure,
        "n_episodes": n_episodes,
        "pool_size": int(pool.size),
        "pool_min": float(pool.min()),
        "pool_max": float(pool.max()),
        "percentiles": thresholds,
    }
    return CandidateSet(policies=policies, provenance=provenance)


def gen_random_candidates() -> CandidateSet:
    policies = tuple(RandomPolicy(i / 10) for i in range(11))
    return CandidateSet(
        policies=policies,
        provenance={"measure": "random", "grid": [p.p for p in policies]},
    )
