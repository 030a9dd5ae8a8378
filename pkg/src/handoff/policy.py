"""Two-layer softmax policies and a likelihood-ratio policy-gradient trainer.

The same episodic trainer drives both the 4-action task policies (novice,
weakened novice, expert) and the 2-action gating policies built elsewhere; an
episode source only has to expose reset() -> obs and step(a) -> (obs, reward,
done).  Updates use discounted return-to-go, a running mean-return baseline,
and an entropy bonus, applied once per episode.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

from .gridworld import N_ACTIONS, GridEnv, TaskDistribution, sample_task
from .seeding import derive_rng, derive_seed

POLICY_FORMAT_VERSION = 1
DEFAULT_HIDDEN_DIM = 64
# Running mean-return baseline update rate.
BASELINE_RATE = 0.02


class TrainingDivergedError(RuntimeError):
    """Parameters became non-finite during training."""


@dataclass
class PolicyParams:
    """Weights of hidden = relu(W1 obs + b1); logits = W2 hidden + b2."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in ("W1", "b1", "W2", "b2"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
            setattr(self, name, arr)

    @property
    def obs_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.W1.shape[0]

    @property
    def action_count(self) -> int:
        return self.W2.shape[0]

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.W1.copy(), self.b1.copy(), self.W2.copy(), self.b2.copy(), dict(self.meta))


@dataclass(frozen=True)
class PolicyOutput:
    logits: np.ndarray
    dist: np.ndarray
    hidden: np.ndarray


@dataclass(frozen=True)
class TrainBudget:
    episodes: int
    learning_rate: float
    discount: float
    entropy_bonus: float
    seed: int
    # Global-norm cap on each per-episode gradient; guards the softmax head
    # against outsized updates from long zero-return episodes.
    max_grad_norm: float = 10.0

    def __post_init__(self) -> None:
        if self.episodes <= 0:
            raise ValueError("episodes must be > 0")
        if not 0.0 < self.discount <= 1.0:
            raise ValueError("discount must be in (0, 1]")
        if self.entropy_bonus < 0.0:
            raise ValueError("entropy_bonus must be >= 0")
        if self.max_grad_norm <= 0.0:
            raise ValueError("max_grad_norm must be > 0")


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def init_params(obs_dim: int, hidden_dim: int, action_count: int, rng: np.random.Generator) -> PolicyParams:
    # Small output weights keep the initial policy near-uniform.
    return PolicyParams(
        W1=rng.normal(0.0, np.sqrt(2.0 / obs_dim), size=(hidden_dim, obs_dim)),
        b1=np.zeros(hidden_dim),
        W2=rng.normal(0.0, 0.01, size=(action_count, hidden_dim)),
        b2=np.zeros(action_count),
    )


def forward(params: PolicyParams, obs: np.ndarray) -> PolicyOutput:
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape != (params.obs_dim,):
        raise ValueError(f"observation shape {obs.shape} does not match obs_dim {params.obs_dim}")
    hidden = np.maximum(params.W1 @ obs + params.b1, 0.0)
    logits = params.W2 @ hidden + params.b2
    return PolicyOutput(logits=logits, dist=softmax(logits), hidden=hidden)


def sample_index(dist: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw; consumes exactly one uniform from the stream."""
    u = rng.random()
    idx = int(np.searchsorted(np.cumsum(dist), u, side="right"))
    return min(idx, len(dist) - 1)


def sample_action(output: PolicyOutput, rng: np.random.Generator) -> int:
    return sample_index(output.dist, rng)


# ---------------------------------------------------------------------------
# Surrogate objective and its gradient
# ---------------------------------------------------------------------------

def _batch_forward(params: PolicyParams, obs_mat: np.ndarray):
    pre = obs_mat @ params.W1.T + params.b1
    hidden = np.maximum(pre, 0.0)
    logits = hidden @ params.W2.T + params.b2
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return pre, hidden, log_probs


def surrogate_objective(
    params: PolicyParams,
    obs_mat: np.ndarray,
    actions: np.ndarray,
    advantages: np.ndarray,
    entropy_bonus: float,
) -> float:
    """sum_t [log pi(a_t|s_t) * adv_t + beta * H(pi(.|s_t))]; maximized by the trainer."""
    _, _, log_probs = _batch_forward(params, obs_mat)
    probs = np.exp(log_probs)
    taken = log_probs[np.arange(len(actions)), actions]
    entropy = -(probs * log_probs).sum(axis=1)
    return float((taken * advantages).sum() + entropy_bonus * entropy.sum())


def surrogate_gradient(
    params: PolicyParams,
    obs_mat: np.ndarray,
    actions: np.ndarray,
    advantages: np.ndarray,
    entropy_bonus: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Analytic gradient of surrogate_objective w.r.t. (W1, b1, W2, b2)."""
    pre, hidden, log_probs = _batch_forward(params, obs_mat)
    probs = np.exp(log_probs)
    t_idx = np.arange(len(actions))

    d_logits = -probs * advantages[:, None]
    d_logits[t_idx, actions] += advantages
    if entropy_bonus:
        # dH/dz_j = p_j * (sum_i p_i log p_i - log p_j)
        s = (probs * log_probs).sum(axis=1, keepdims=True)
        d_logits += entropy_bonus * probs * (s - log_probs)

    gW2 = d_logits.T @ hidden
    gb2 = d_logits.sum(axis=0)
    d_pre = (d_logits @ params.W2) * (pre > 0.0)
    gW1 = d_pre.T @ obs_mat
    gb1 = d_pre.sum(axis=0)
    return gW1, gb1, gW2, gb2


def discounted_returns(rewards: list[float], discount: float) -> np.ndarray:
    out = np.empty(len(rewards))
    g = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        g = rewards[t] + discount * g
        out[t] = g
    return out


# ---------------------------------------------------------------------------
# Episodic trainer
# ---------------------------------------------------------------------------

class EpisodeSource(Protocol):
    def reset(self) -> np.ndarray: ...

    def step(self, action: int) -> tuple[np.ndarray, float, bool]: ...


@dataclass(frozen=True)
class ConvergenceCheck:
    """Early stop when evaluated mean return improves < rel_improvement twice in a row."""

    eval_every: int = 2000
    eval_episodes: int = 1000
    rel_improvement: float = 0.01
    patience: int = 2


def train_episodic(
    make_episode: Callable[[int], EpisodeSource],
    obs_dim: int,
    action_count: int,
    budget: TrainBudget,
    hidden_dim: int = DEFAULT_HIDDEN_DIM,
    init: PolicyParams | None = None,
    convergence: ConvergenceCheck | None = None,
    eval_fn: Callable[[PolicyParams], float] | None = None,
) -> PolicyParams:
    """Run REINFORCE over budget.episodes episodes; fully seed-deterministic.

    The returned params carry meta["curve"], the mean undiscounted return per
    100-episode block.
    """
    params = init.copy() if init is not None else init_params(
        obs_dim, hidden_dim, action_count, derive_rng(budget.seed, "init")
    )
    lr = budget.learning_rate
    baseline = 0.0
    curve: list[float] = []
    block: list[float] = []
    last_eval = -np.inf
    stall = 0
    episodes_run = 0

    for ep in range(budget.episodes):
        env = make_episode(ep)
        rng = derive_rng(budget.seed, "rollout", ep)
        obs = env.reset()
        obs_list: list[np.ndarray] = []
        act_list: list[int] = []
        rew_list: list[float] = []
        done = False
        while not done:
            out = forward(params, obs)
            a = sample_index(out.dist, rng)
            obs_list.append(obs)
            act_list.append(a)
            obs, reward, done = env.step(a)
            rew_list.append(reward)

        returns = discounted_returns(rew_list, budget.discount)
        advantages = returns - baseline
        baseline += BASELINE_RATE * (returns[0] - baseline)
        grads = surrogate_gradient(
            params,
            np.asarray(obs_list),
            np.asarray(act_list),
            advantages,
            budget.entropy_bonus,
        )
        norm = np.sqrt(sum(float((g * g).sum()) for g in grads))
        if norm > budget.max_grad_norm:
            grads = tuple(g * (budget.max_grad_norm / norm) for g in grads)
        params.W1 += lr * grads[0]
        params.b1 += lr * grads[1]
        params.W2 += lr * grads[2]
        params.b2 += lr * grads[3]
        if not (np.all(np.isfinite(params.W1)) and np.all(np.isfinite(params.W2))):
            raise TrainingDivergedError(f"non-finite parameters after episode {ep}")

        episodes_run = ep + 1
        block.append(float(sum(rew_list)))
        if len(block) == 100:
            curve.append(float(np.mean(block)))
            block = []

        if convergence is not None and eval_fn is not None and (ep + 1) % convergence.eval_every == 0:
            score = eval_fn(params)
            if score <= last_eval * (1.0 + convergence.rel_improvement):
                stall += 1
            else:
                stall = 0
            last_eval = max(last_eval, score)
            if stall >= convergence.patience:
                break

    if block:
        curve.append(float(np.mean(block)))
    params.meta.update(
        {
            "episodes": episodes_run,
            "budget_episodes": budget.episodes,
            "learning_rate": budget.learning_rate,
            "discount": budget.discount,
            "entropy_bonus": budget.entropy_bonus,
            "seed": budget.seed,
            "curve": curve,
        }
    )
    return params


# ---------------------------------------------------------------------------
# Task-policy training recipes
# ---------------------------------------------------------------------------

class _TaskEpisode:
    """Adapts GridEnv to the (obs, reward, done) step protocol."""

    def __init__(self, env: GridEnv):
        self._env = env

    def reset(self) -> np.ndarray:
        return self._env.reset()

    def step(self, action: int) -> tuple[np.ndarray, float, bool]:
        res = self._env.step(action)
        return res.observation, res.reward, res.done


def _dist_episode_factory(dist: TaskDistribution, seed: int, window_radius: int) -> Callable[[int], _TaskEpisode]:
    def make_episode(ep: int) -> _TaskEpisode:
        task = sample_task(dist, derive_seed(seed, "task", ep))
        return _TaskEpisode(GridEnv(task, window_radius))

    return make_episode


def run_episode(params: PolicyParams, env: GridEnv, rng: np.random.Generator) -> tuple[float, int]:
    """Roll one stochastic episode; returns (undiscounted return, length)."""
    obs = env.reset()
    total = 0.0
    while True:
        out = forward(params, obs)
        res = env.step(sample_index(out.dist, rng))
        total += res.reward
        obs = res.observation
        if res.done:
            return total, env.steps_taken


def mean_return(
    params: PolicyParams,
    dist: TaskDistribution,
    n_episodes: int,
    seed: int,
    window_radius: int,
) -> float:
    total = 0.0
    for ep in range(n_episodes):
        env = GridEnv(sample_task(dist, derive_seed(seed, "task", ep)), window_radius)
        ret, _ = run_episode(params, env, derive_rng(seed, "rollout", ep))
        total += ret
    return total / n_episodes


def train_policy_gradient(
    dist: TaskDistribution,
    budget: TrainBudget,
    window_radius: int = 3,
    hidden_dim: int = DEFAULT_HIDDEN_DIM,
    convergence: ConvergenceCheck | None = None,
) -> PolicyParams:
    """Train a 4-action task policy on tasks sampled from dist."""
    probe = GridEnv(sample_task(dist, derive_seed(budget.seed, "probe")), window_radius)
    eval_fn = None
    if convergence is not None:
        eval_seed = derive_seed(budget.seed, "convergence-eval")
        eval_fn = lambda p: mean_return(p, dist, convergence.eval_episodes, eval_seed, window_radius)
    params = train_episodic(
        _dist_episode_factory(dist, budget.seed, window_radius),
        obs_dim=probe.obs_dim,
        action_count=N_ACTIONS,
        budget=budget,
        hidden_dim=hidden_dim,
        convergence=convergence,
        eval_fn=eval_fn,
    )
    params.meta["distribution"] = dist.name
    params.meta["window_radius"] = window_radius
    return params


def make_novice(
    train_dist: TaskDistribution,
    budget: TrainBudget,
    window_radius: int = 3,
    hidden_dim: int = DEFAULT_HIDDEN_DIM,
) -> PolicyParams:
    params = train_policy_gradient(train_dist, budget, window_radius, hidden_dim)
    params.meta["role"] = "novice"
    return params


def make_weakened_novice(
    train_dist: TaskDistribution,
    budget: TrainBudget,
    weakened_fraction: float = 0.5,
    window_radius: int = 3,
    hidden_dim: int = DEFAULT_HIDDEN_DIM,
) -> PolicyParams:
    """Same recipe as the novice, with the episode budget cut to the given fraction."""
    if not 0.0 < weakened_fraction < 1.0:
        raise ValueError("weakened_fraction must be in (0, 1)")
    reduced = TrainBudget(
        episodes=max(1, round(budget.episodes * weakened_fraction)),
        learning_rate=budget.learning_rate,
        discount=budget.discount,
        entropy_bonus=budget.entropy_bonus,
        seed=budget.seed,
    )
    params = train_policy_gradient(train_dist, reduced, window_radius, hidden_dim)
    params.meta["role"] = "weakened_novice"
    params.meta["weakened_fraction"] = weakened_fraction
    return params


def make_expert(
    test_dist: TaskDistribution,
    budget: TrainBudget,
    window_radius: int = 3,
    hidden_dim: int = DEFAULT_HIDDEN_DIM,
    convergence: ConvergenceCheck | None = ConvergenceCheck(),
) -> PolicyParams:
    params = train_policy_gradient(test_dist, budget, window_radius, hidden_dim, convergence)
    params.meta["role"] = "expert"
    return params


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def policy_to_dict(params: PolicyParams) -> dict:
    return {
        "version": POLICY_FORMAT_VERSION,
        "obs_dim": params.obs_dim,
        "hidden_dim": params.hidden_dim,
        "action_count": params.action_count,
        "W1": params.W1.tolist(),
        "b1": params.b1.tolist(),
        "W2": params.W2.tolist(),
        "b2": params.b2.tolist(),
        "training_meta": params.meta,
    }


def policy_from_dict(doc: dict) -> PolicyParams:
    if doc.get("version") != POLICY_FORMAT_VERSION:
        raise ValueError(f"unsupported policy format version {doc.get('version')!r}")
    params = PolicyParams(
        W1=np.array(doc["W1"]),
        b1=np.array(doc["b1"]),
        W2=np.array(doc["W2"]),
        b2=np.array(doc["b2"]),
        meta=doc.get("training_meta", {}),
    )
    if params.obs_dim != doc["obs_dim"] or params.hidden_dim != doc["hidden_dim"]:
        raise ValueError("declared dimensions do not match weight shapes")
    return params


def save_policy(params: PolicyParams, path: str | Path) -> None:
    Path(path).write_text(json.dumps(policy_to_dict(params), sort_keys=True), encoding="utf-8")


def load_policy(path: str | Path) -> PolicyParams:
    return policy_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
