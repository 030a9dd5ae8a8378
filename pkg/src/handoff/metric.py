"""Per-penalty evaluation curves and the bootstrap area-under-curve metric.

A policy is rolled out for M episodes at each penalty level alpha_i = i/K,
i = 1..K, with task seeds and action streams shared across rows and across
policies (paired evaluation).  The summary statistic is the trapezoid area
under the (alpha, mean return) curve; its mean and standard deviation come
from N bootstrap simulations that resample m episodes per row.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .coord import (
    EXPERT,
    CoordEnv,
    PenaltyConfig,
    PolicyStats,
    episode_action_rng,
    episode_decision_rng,
    episode_task,
)
from .gridworld import TaskDistribution
from .policy import PolicyParams
from .seeding import derive_rng


def alpha_grid(k: int) -> np.ndarray:
    """Penalty levels i/K for i = 1..K; strictly increasing, ending at 1."""
    if k < 2:
        raise ValueError("need at least 2 penalty levels")
    return np.arange(1, k + 1) / k


@dataclass
class EvalCurve:
    alphas: np.ndarray        # (K,)
    returns: np.ndarray       # (K, M)
    expert_steps: np.ndarray  # (K, M)
    lengths: np.ndarray       # (K, M)

    def __post_init__(self) -> None:
        k = len(self.alphas)
        for name in ("returns", "expert_steps", "lengths"):
            arr = getattr(self, name)
            if arr.shape[0] != k or arr.shape != self.returns.shape:
                raise ValueError(f"{name} shape {arr.shape} inconsistent with K={k}")
        if not np.all(np.diff(self.alphas) > 0) or self.alphas[-1] != 1.0:
            raise ValueError("alphas must be strictly increasing and end at 1")

    @property
    def n_episodes(self) -> int:
        return self.returns.shape[1]

    def expert_step_fraction(self) -> float:
        """Mean fraction of expert-controlled steps over all (alpha, episode) slots."""
        return float((self.expert_steps / self.lengths).mean())


@dataclass(frozen=True)
class AucReport:
    mean: float
    std: float
    n_bootstrap: int
    subsample: int
    per_alpha_means: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "auc_mean": self.mean,
            "auc_std": self.std,
            "n_bootstrap": self.n_bootstrap,
            "subsample": self.subsample,
            "per_alpha_means": list(self.per_alpha_means),
        }


def _policy_for_row(policy, row_index: int):
    fn = getattr(policy, "for_alpha_index", None)
    return fn(row_index) if fn is not None else policy


def rollout_curve(
    policy,
    novice: PolicyParams,
    expert: PolicyParams,
    dist: TaskDistribution,
    stats: PolicyStats,
    k_levels: int,
    n_episodes: int,
    seed: int,
    window_radius: int = 3,
) -> EvalCurve:
    """Evaluate a coordination policy over the full penalty grid.

    Episode j reuses the same task and the same action stream in every row, so
    a policy whose decisions ignore the penalty realizes identical trajectories
    across rows and the penalty enters linearly.
    """
    alphas = alpha_grid(k_levels)
    returns = np.empty((k_levels, n_episodes))
    esteps = np.empty((k_levels, n_episodes), dtype=np.int64)
    lengths = np.empty((k_levels, n_episodes), dtype=np.int64)

    tasks = [episode_task(dist, seed, j) for j in range(n_episodes)]
    for i, alpha in enumerate(alphas):
        penalty = PenaltyConfig(float(alpha), stats.mean_return, stats.mean_length)
        row_policy = _policy_for_row(policy, i)
        for j in range(n_episodes):
            env = CoordEnv(tasks[j], novice, expert, window_radius)
            act_rng = episode_action_rng(seed, j)
            dec_rng = episode_decision_rng(seed, j)
            bundle = env.reset()
            total = 0.0
            n_expert = 0
            while True:
                decision = row_policy.decide(bundle, dec_rng)
                res = env.step(decision, penalty, act_rng)
                total += res.reward
                n_expert += res.acted == EXPERT
                bundle = res.bundle
                if res.done:
                    break
            returns[i, j] = total
            esteps[i, j] = n_expert
            lengths[i, j] = env.steps_taken
    return EvalCurve(alphas=alphas, returns=returns, expert_steps=esteps, lengths=lengths)


def area_under_curve(alphas, values) -> float | np.ndarray:
    """Trapezoid integral of the (alpha, value) points over [alpha_1, alpha_K].

    values may carry leading batch dimensions; the integral runs over the last.
    """
    alphas = np.asarray(alphas, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if alphas.ndim != 1 or len(alphas) < 2 or alphas.shape != values.shape[-1:]:
        raise ValueError("need at least 2 points with matching alphas")
    if not np.all(np.diff(alphas) > 0):
        raise ValueError("alphas must be strictly increasing")
    widths = np.diff(alphas)
    mids = 0.5 * (values[..., 1:] + values[..., :-1])
    return (widths * mids).sum(axis=-1)


def auc_bootstrap(
    curve: EvalCurve,
    n_bootstrap: int = 1000,
    subsample: int = 256,
    seed: int = 0,
) -> AucReport:
    """Bootstrap mean and standard deviation of the area under the curve.

    Each simulation draws, with replacement, `subsample` episode returns per
    penalty row, averages them, and integrates the resulting curve.
    """
    m_total = curve.n_episodes
    if subsample > m_total:
        raise ValueError(f"subsample {subsample} exceeds episodes per row {m_total}")
    rng = derive_rng(seed, "bootstrap")
    k = len(curve.alphas)
    idx = rng.integers(0, m_total, size=(n_bootstrap, k, subsample))
    sampled = curve.returns[np.arange(k)[None, :, None], idx]
    row_means = sampled.mean(axis=2)
    areas = area_under_curve(curve.alphas, row_means)
    return AucReport(
        mean=float(areas.mean()),
        std=float(areas.std(ddof=1)),
        n_bootstrap=n_bootstrap,
        subsample=subsample,
        per_alpha_means=tuple(float(x) for x in curve.returns.mean(axis=1)),
    )


# ---------------------------------------------------------------------------
# Persistence (plot-ready CSV; one row per (alpha, episode) slot)
# ---------------------------------------------------------------------------

CURVE_COLUMNS = ("alpha", "episode", "return", "expert_steps", "length")


def curve_to_csv(curve: EvalCurve, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CURVE_COLUMNS)
        for i, alpha in enumerate(curve.alphas):
            for j in range(curve.n_episodes):
                writer.writerow(
                    [
                        repr(float(alpha)),
                        j,
                        repr(float(curve.returns[i, j])),
                        int(curve.expert_steps[i, j]),
                        int(curve.lengths[i, j]),
                    ]
                )


def curve_from_csv(path: str | Path) -> EvalCurve:
    rows: dict[float, list[tuple[int, float, int, int]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            rows.setdefault(float(rec["alpha"]), []).append(
                (int(rec["episode"]), float(rec["return"]), int(rec["expert_steps"]), int(rec["length"]))
            )
    alphas = np.array(sorted(rows))
    k, m = len(alphas), len(rows[alphas[0]])
    returns = np.empty((k, m))
    esteps = np.empty((k, m), dtype=np.int64)
    lengths = np.empty((k, m), dtype=np.int64)
    for i, alpha in enumerate(alphas):
        for j, ret, es, ln in sorted(rows[alpha]):
            returns[i, j] = ret
            esteps[i, j] = es
            lengths[i, j] = ln
    return EvalCurve(alphas=alphas, returns=returns, expert_steps=esteps, lengths=lengths)
