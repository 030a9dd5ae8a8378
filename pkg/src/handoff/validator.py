"""Candidate validation under simulated or true test conditions.

The simulated validator casts the weakened novice as the acting novice, the
full novice as the stand-in expert, and the training distribution as the test
distribution, so candidate ranking needs neither the real expert nor any test
task.  The oracle validator evaluates under the true (novice, expert, test
distribution) triple and exists for diagnostics only.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

from .candidates import CandidateSet
from .coord import PolicyStats, estimate_policy_stats
from .gridworld import TaskDistribution
from .metric import AucReport, EvalCurve, auc_bootstrap, rollout_curve
from .policy import PolicyParams
from .seeding import derive_seed

FAITHFULNESS_LIMIT = 5.0


class FaithfulnessUndefinedError(RuntimeError):
    """The novice earns nothing on the test distribution; the ratio is undefined."""


@dataclass(frozen=True)
class ValidatorSpec:
    """Role casting for one evaluation context.

    The feature bundles scored by candidates always come from the policy cast
    as novice, so the feature source follows the casting by construction.
    """

    name: str  # "simulated" | "oracle"
    novice: PolicyParams
    expert: PolicyParams
    dist: TaskDistribution


def simulated_spec(weakened: PolicyParams, novice: PolicyParams, train_dist: TaskDistribution) -> ValidatorSpec:
    return ValidatorSpec(name="simulated", novice=weakened, expert=novice, dist=train_dist)


def oracle_spec(novice: PolicyParams, expert: PolicyParams, test_dist: TaskDistribution) -> ValidatorSpec:
    return ValidatorSpec(name="oracle", novice=novice, expert=expert, dist=test_dist)


@dataclass(frozen=True)
class EvalSettings:
    """Evaluation knobs shared by validation and test measurement."""

    k_levels: int = 6
    n_episodes: int = 256
    subsample: int = 128
    n_bootstrap: int = 1000
    stats_episodes: int = 1000
    window_radius: int = 3

    def __post_init__(self) -> None:
        if self.subsample > self.n_episodes:
            raise ValueError("subsample must be <= n_episodes")

    def with_episodes(self, n_episodes: int, subsample: int | None = None) -> "EvalSettings":
        sub = min(self.subsample, n_episodes) if subsample is None else subsample
        return EvalSettings(
            self.k_levels, n_episodes, sub, self.n_bootstrap, self.stats_episodes, self.window_radius
        )


def penalty_stats(spec: ValidatorSpec, settings: EvalSettings, seed: int) -> PolicyStats:
    """Help-price statistics from the spec's own expert on the spec's own tasks."""
    return estimate_policy_stats(
        spec.expert, spec.dist, settings.stats_episodes, derive_seed(seed, "penalty-stats"),
        settings.window_radius,
    )


def validate(
    spec: ValidatorSpec,
    policy,
    settings: EvalSettings,
    seed: int,
    stats: PolicyStats | None = None,
) -> tuple[AucReport, EvalCurve]:
    """Full curve rollout plus bootstrap AUC under the spec's role casting."""
    if stats is None:
        stats = penalty_stats(spec, settings, seed)
    curve = rollout_curve(
        policy,
        spec.novice,
        spec.expert,
        spec.dist,
        stats,
        settings.k_levels,
        settings.n_episodes,
        derive_seed(seed, "curve"),
        settings.window_radius,
    )
    report = auc_bootstrap(curve, settings.n_bootstrap, settings.subsample, derive_seed(seed, "auc"))
    return report, curve


@dataclass(frozen=True)
class RankingRow:
    index: int
    param: float
    auc_mean: float
    auc_std: float
    expert_step_fraction: float


def rank_candidates(
    candidates: CandidateSet,
    spec: ValidatorSpec,
    settings: EvalSettings,
    seed: int,
) -> list[RankingRow]:
    """Validate every candidate under the same seed (paired tasks across candidates)."""
    stats = penalty_stats(spec, settings, seed)
    rows = []
    for i, policy in enumerate(candidates.policies):
        report, curve = validate(spec, policy, settings, seed, stats=stats)
        rows.append(
            RankingRow(
                index=i,
                param=float(policy.param),
                auc_mean=report.mean,
                auc_std=report.std,
                expert_step_fraction=curve.expert_step_fraction(),
            )
        )
    return rows


def best_row(rows: list[RankingRow]) -> RankingRow:
    """Highest AUC mean; ties fall to fewer expert steps, then the lower parameter."""
    return min(rows, key=lambda r: (-r.auc_mean, r.expert_step_fraction, r.param, r.index))


def select_best(
    candidates: CandidateSet,
    spec: ValidatorSpec,
    settings: EvalSettings,
    seed: int,
) -> tuple[object, list[RankingRow]]:
    rows = rank_candidates(candidates, spec, settings, seed)
    return candidates.policies[best_row(rows).index], rows


RANKING_COLUMNS = ("candidate", "param", "auc_mean", "auc_std", "expert_step_fraction")


def ranking_to_csv(rows: list[RankingRow], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RANKING_COLUMNS)
        for row in rows:
            writer.writerow(
                [row.index, repr(row.param), repr(row.auc_mean), repr(row.auc_std),
                 repr(row.expert_step_fraction)]
            )


def ranking_from_csv(path: str | Path) -> list[RankingRow]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            rows.append(
                RankingRow(
                    index=int(rec["candidate"]),
                    param=float(rec["param"]),
                    auc_mean=float(rec["auc_mean"]),
                    auc_std=float(rec["auc_std"]),
                    expert_step_fraction=float(rec["expert_step_fraction"]),
                )
            )
    return rows


def _faithfulness(numerator: float, denominator: float) -> float:
    if denominator <= 0.0:
        raise FaithfulnessUndefinedError(
            f"novice mean return on the test distribution is {denominator}; ratio undefined"
        )
    ratio = numerator / denominator
    if numerator == 0.0:
        warnings.warn("weakened novice earns nothing on the training distribution")
    if ratio > FAITHFULNESS_LIMIT:
        warnings.warn(
            f"faithfulness ratio {ratio:.2f} exceeds {FAITHFULNESS_LIMIT}; "
            "the simulated validation may not track test conditions"
        )
    return ratio


def faithfulness_ratio(
    weakened: PolicyParams,
    novice: PolicyParams,
    train_dist: TaskDistribution,
    test_dist: TaskDistribution,
    n_episodes: int = 1000,
    seed: int = 0,
    window_radius: int = 3,
) -> float:
    """Weakened-novice train return over novice test return; warn when above 5."""
    num = estimate_policy_stats(
        weakened, train_dist, n_episodes, derive_seed(seed, "faithfulness-train"), window_radius
    ).mean_return
    den = estimate_policy_stats(
        novice, test_dist, n_episodes, derive_seed(seed, "faithfulness-test"), window_radius
    ).mean_return
    return _faithfulness(num, den)
