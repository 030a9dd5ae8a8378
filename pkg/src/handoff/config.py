"""Experiment configuration: YAML schema, validation, and canonical hashing.

Validation reports every problem at once, naming the offending key path and,
where the key is present in the file, its line number.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .gridworld import TaskDistribution, ranges_disjoint
from .scores import MEASURES, normalize_selector
from .validator import EvalSettings


class ConfigError(ValueError):
    """One or more configuration problems; str() lists them all."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("; ".join(problems))


@dataclass(frozen=True)
class PolicyBudgetConfig:
    episodes: int
    learning_rate: float
    discount: float
    entropy_bonus: float
    max_grad_norm: float


@dataclass(frozen=True)
class SvddConfig:
    selector: tuple[str, ...] = ("hidden",)
    embed_dim: int = 16
    hidden_dim: int = 32
    epochs: int = 100
    learning_rate: float = 5e-3

    def options(self) -> dict:
        return {
            "embed_dim": self.embed_dim,
            "hidden_dim": self.hidden_dim,
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
        }


@dataclass(frozen=True)
class OracleConfig:
    episodes: int = 4000
    learning_rate: float = 0.02
    discount: float = 0.97
    entropy_bonus: float = 0.01
    hidden_dim: int = 32
    selectors: tuple[tuple[str, ...], ...] = ()  # empty means all 7


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    out_dir: str
    window_radius: int
    hidden_dim: int
    train_dist: TaskDistribution
    test_dist: TaskDistribution
    novice: PolicyBudgetConfig
    expert: PolicyBudgetConfig
    weakened_fraction: float
    expert_eval_every: int
    measures: tuple[str, ...]
    svdd: SvddConfig
    proposal_episodes: int
    eval: EvalSettings
    validation_episodes: int
    oracle: OracleConfig
    raw: dict = field(compare=False, default_factory=dict, repr=False)

    def eval_settings(self) -> EvalSettings:
        return self.eval

    def validation_settings(self) -> EvalSettings:
        return self.eval.with_episodes(self.validation_episodes)


def config_hash(cfg: ExperimentConfig) -> str:
    canon = json.dumps(cfg.raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Line-aware YAML loading
# ---------------------------------------------------------------------------

def _node_lines(node, path: tuple, out: dict) -> None:
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            _node_lines(value_node, path + (key_node.value,), out)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            _node_lines(item, path + (i,), out)


def load_yaml_with_lines(text: str) -> tuple[dict, dict]:
    data = yaml.safe_load(text)
    lines: dict[tuple, int] = {}
    root = yaml.compose(text)
    if root is not None:
        _node_lines(root, (), lines)
    return data or {}, lines


class _Reader:
    """Pulls typed values out of the raw mapping, collecting problems."""

    def __init__(self, data: dict, lines: dict):
        self.data = data
        self.lines = lines
        self.problems: list[str] = []

    def _locate(self, path: tuple) -> str:
        key = ".".join(str(p) for p in path)
        line = self.lines.get(path)
        return f"{key} (line {line})" if line is not None else key

    def fail(self, path: tuple, message: str) -> None:
        self.problems.append(f"{self._locate(path)}: {message}")

    def get(self, *path, kind=None, default=None, required=True):
        node = self.data
        for p in path:
            if not isinstance(node, dict) or p not in node:
                if required and default is None:
                    self.fail(path, "missing required key")
                return default
            node = node[p]
        if kind is not None and not isinstance(node, kind):
            kind_name = kind[0].__name__ if isinstance(kind, tuple) else kind.__name__
            self.fail(path, f"expected {kind_name}, got {type(node).__name__}")
            return default
        return node

    def number(self, *path, default=None, required=True, low=None, high=None):
        value = self.get(*path, kind=(int, float), default=default, required=required)
        if value is None:
            return default
        if (low is not None and value < low) or (high is not None and value > high):
            self.fail(path, f"value {value} out of range [{low}, {high}]")
        return value

    def integer(self, *path, default=None, required=True, low=None):
        value = self.get(*path, kind=int, default=default, required=required)
        if value is not None and low is not None and value < low:
            self.fail(path, f"value {value} must be >= {low}")
        return value

    def pair(self, *path, kind, default=None):
        value = self.get(*path, kind=list, default=default)
        if value is None:
            return default
        if len(value) != 2 or not all(isinstance(v, kind) for v in value):
            self.fail(path, f"expected a [low, high] pair of {kind.__name__}")
            return default
        return tuple(value)


def _read_dist(reader: _Reader, name: str) -> TaskDistribution | None:
    sizes = reader.pair("env", name, "grid_size", kind=int)
    densities = reader.get("env", name, "hazard_density", kind=list)
    if densities is not None:
        if len(densities) != 2 or not all(isinstance(v, (int, float)) for v in densities):
            reader.fail(("env", name, "hazard_density"), "expected a [low, high] pair of numbers")
            densities = None
        else:
            densities = (float(densities[0]), float(densities[1]))
    factor = reader.integer("env", name, "max_steps_factor", default=4, required=False, low=4)
    if sizes is None or densities is None:
        return None
    try:
        return TaskDistribution(name, sizes, densities, factor)
    except ValueError as exc:
        reader.fail(("env", name), str(exc))
        return None


def _read_budget(reader: _Reader, section: str, seed_tag: int) -> PolicyBudgetConfig | None:
    episodes = reader.integer("policy", section, "episodes", low=1)
    lr = reader.number("policy", section, "learning_rate", low=0.0)
    discount = reader.number("policy", "discount", low=0.0, high=1.0)
    entropy = reader.number("policy", "entropy_bonus", low=0.0)
    clip = reader.number("policy", "max_grad_norm", default=10.0, required=False, low=0.0)
    if None in (episodes, lr, discount, entropy):
        return None
    return PolicyBudgetConfig(episodes, lr, discount, entropy, clip)


def parse_config(data: dict, lines: dict | None = None) -> ExperimentConfig:
    reader = _Reader(data, lines or {})

    seed = reader.integer("seed", low=0)
    out_dir = reader.get("out_dir", kind=str)
    window_radius = reader.integer("env", "window_radius", default=3, required=False, low=1)
    hidden_dim = reader.integer("policy", "hidden_dim", default=64, required=False, low=1)

    train_dist = _read_dist(reader, "train")
    test_dist = _read_dist(reader, "test")
    if train_dist and test_dist and not ranges_disjoint(train_dist, test_dist):
        reader.fail(("env",), "train and test ranges must be disjoint in at least one dimension")

    novice = _read_budget(reader, "novice", 0)
    expert = _read_budget(reader, "expert", 1)
    weakened_fraction = reader.number("policy", "weakened_fraction", default=0.5, required=False)
    if weakened_fraction is not None and not 0.0 < weakened_fraction < 1.0:
        reader.fail(("policy", "weakened_fraction"), f"value {weakened_fraction} must be in (0, 1)")
    expert_eval_every = reader.integer("policy", "expert", "eval_every", default=10000, required=False, low=1)

    measures = reader.get("measures", kind=list, default=list(MEASURES), required=False)
    for m in measures:
        if m not in MEASURES:
            reader.fail(("measures",), f"unknown measure {m!r}; valid: {', '.join(MEASURES)}")

    svdd_selector = reader.get("svdd", "selector", kind=list, default=["hidden"], required=False)
    try:
        svdd_selector = normalize_selector(svdd_selector)
    except ValueError as exc:
        reader.fail(("svdd", "selector"), str(exc))
        svdd_selector = ("hidden",)
    svdd = SvddConfig(
        selector=svdd_selector,
        embed_dim=reader.integer("svdd", "embed_dim", default=16, required=False, low=1),
        hidden_dim=reader.integer("svdd", "hidden_dim", default=32, required=False, low=1),
        epochs=reader.integer("svdd", "epochs", default=100, required=False, low=1),
        learning_rate=reader.number("svdd", "learning_rate", default=5e-3, required=False, low=0.0),
    )

    proposal_episodes = reader.integer("proposal", "episodes", default=64, required=False, low=1)

    k_levels = reader.integer("eval", "K", default=6, required=False, low=2)
    n_episodes = reader.integer("eval", "M", default=256, required=False, low=1)
    subsample = reader.integer("eval", "m", default=128, required=False, low=1)
    n_bootstrap = reader.integer("eval", "N", default=1000, required=False, low=1)
    stats_episodes = reader.integer("eval", "stats_episodes", default=1000, required=False, low=1)
    validation_episodes = reader.integer("eval", "validation_M", default=128, required=False, low=1)
    if subsample is not None and n_episodes is not None and subsample > n_episodes:
        reader.fail(("eval", "m"), f"subsample m={subsample} must be <= M={n_episodes}")

    oracle_selectors = reader.get("oracle", "selectors", kind=list, default=None, required=False)
    parsed_selectors: tuple[tuple[str, ...], ...] = ()
    if oracle_selectors is not None:
        try:
            parsed_selectors = tuple(normalize_selector(s) for s in oracle_selectors)
        except (ValueError, TypeError) as exc:
            reader.fail(("oracle", "selectors"), str(exc))
    oracle = OracleConfig(
        episodes=reader.integer("oracle", "episodes", default=4000, required=False, low=1),
        learning_rate=reader.number("oracle", "learning_rate", default=0.02, required=False, low=0.0),
        discount=reader.number("oracle", "discount", default=0.97, required=False, low=0.0, high=1.0),
        entropy_bonus=reader.number("oracle", "entropy_bonus", default=0.01, required=False, low=0.0),
        hidden_dim=reader.integer("oracle", "hidden_dim", default=32, required=False, low=1),
        selectors=parsed_selectors,
    )

    if reader.problems:
        raise ConfigError(reader.problems)

    return ExperimentConfig(
        seed=seed,
        out_dir=out_dir,
        window_radius=window_radius,
        hidden_dim=hidden_dim,
        train_dist=train_dist,
        test_dist=test_dist,
        novice=novice,
        expert=expert,
        weakened_fraction=weakened_fraction,
        expert_eval_every=expert_eval_every,
        measures=tuple(measures),
        svdd=svdd,
        proposal_episodes=proposal_episodes,
        eval=EvalSettings(
            k_levels=k_levels,
            n_episodes=n_episodes,
            subsample=subsample,
            n_bootstrap=n_bootstrap,
            stats_episodes=stats_episodes,
            window_radius=window_radius,
        ),
        validation_episodes=validation_episodes,
        oracle=oracle,
        raw=data,
    )


def load_config(path: str | Path, seed: int | None = None, out_dir: str | None = None) -> ExperimentConfig:
    """Load and validate a YAML config; optional seed/out_dir overrides."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data, lines = load_yaml_with_lines(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"invalid YAML in {path}: {exc}"]) from exc
    if seed is not None:
        data["seed"] = seed
    if out_dir is not None:
        data["out_dir"] = out_dir
    return parse_config(data, lines)
