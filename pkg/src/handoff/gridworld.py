"""Gridworld task family with a controllable train-to-test distribution shift.

A task is an n-by-n grid with scattered lethal hazard cells, a start cell and
a goal cell, generated deterministically from a layout seed.  The agent sees
an egocentric (2k+1)x(2k+1) binary window with wall / hazard / goal channels,
flattened to a fixed-length vector, so one policy parameterization runs
unchanged on every grid size.  Reaching the goal at step t pays
1 - 0.9 * t / max_steps; stepping onto a hazard ends the episode with reward
0; all other steps pay 0.  Dynamics are fully deterministic.
"""
from __future__ import annotations

import functools
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .seeding import derive_rng, derive_seed

ACTION_NAMES = ("up", "down", "left", "right")
N_ACTIONS = 4
_MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))

DEFAULT_WINDOW_RADIUS = 3
MAX_LAYOUT_ATTEMPTS = 1000
# Start and goal are rejection-sampled until their Manhattan distance reaches
# this fraction of the grid size, so episode difficulty scales with the grid.
MIN_SEPARATION_FRACTION = 0.75


class LayoutError(RuntimeError):
    """Layout rejection sampling could not produce a solvable grid."""


class EpisodeDoneError(RuntimeError):
    """step() was called after the episode already ended."""


@dataclass(frozen=True)
class TaskSpec:
    """Deterministic description of one task; the layout derives from layout_seed."""

    grid_size: int
    hazard_density: float
    max_steps: int
    layout_seed: int

    def __post_init__(self) -> None:
        if self.grid_size < 5:
            raise ValueError(f"grid_size must be >= 5, got {self.grid_size}")
        if not 0.0 <= self.hazard_density <= 1.0:
            raise ValueError(f"hazard_density must be in [0, 1], got {self.hazard_density}")
        if self.max_steps < 4 * self.grid_size:
            raise ValueError(
                f"max_steps must be >= 4 * grid_size ({4 * self.grid_size}), got {self.max_steps}"
            )


@dataclass(frozen=True)
class TaskDistribution:
    """Uniform sampler over grid sizes and hazard densities."""

    name: str
    grid_size_range: tuple[int, int]
    hazard_density_range: tuple[float, float]
    max_steps_factor: int = 4  # max_steps = factor * grid_size

    def __post_init__(self) -> None:
        if self.name not in ("train", "test"):
            raise ValueError(f"distribution name must be 'train' or 'test', got {self.name!r}")
        lo, hi = self.grid_size_range
        if lo > hi or lo < 5:
            raise ValueError(f"empty or invalid grid_size_range {self.grid_size_range}")
        dlo, dhi = self.hazard_density_range
        if dlo > dhi or dlo < 0.0 or dhi > 1.0:
            raise ValueError(f"empty or invalid hazard_density_range {self.hazard_density_range}")
        if self.max_steps_factor < 4:
            raise ValueError("max_steps_factor must be >= 4")


def ranges_disjoint(train: TaskDistribution, test: TaskDistribution) -> bool:
    """True if the two distributions are disjoint in at least one dimension."""
    s_lo, s_hi = train.grid_size_range
    t_lo, t_hi = test.grid_size_range
    size_disjoint = s_hi < t_lo or t_hi < s_lo
    d_lo, d_hi = train.hazard_density_range
    e_lo, e_hi = test.hazard_density_range
    density_disjoint = d_hi < e_lo or e_hi < d_lo
    return size_disjoint or density_disjoint


@dataclass(eq=False)
class Layout:
    """Concrete grid realization: hazard mask plus start and goal cells."""

    grid_size: int
    hazard: np.ndarray  # (n, n) bool
    start: tuple[int, int]
    goal: tuple[int, int]


def goal_reachable(layout: Layout) -> bool:
    """Breadth-first search for a hazard-free 4-connected start-to-goal path."""
    n = layout.grid_size
    seen = np.zeros((n, n), dtype=bool)
    queue = deque([layout.start])
    seen[layout.start] = True
    while queue:
        r, c = queue.popleft()
        if (r, c) == layout.goal:
            return True
        for dr, dc in _MOVES:
            nr, nc = r + dr, c + dc
            if 0 <= nr < n and 0 <= nc < n and not seen[nr, nc] and not layout.hazard[nr, nc]:
                seen[nr, nc] = True
                queue.append((nr, nc))
    return False


@functools.lru_cache(maxsize=4096)
def build_layout(spec: TaskSpec) -> Layout:
    """Rejection-sample a solvable layout, deterministically from spec.layout_seed."""
    n = spec.grid_size
    min_separation = round(MIN_SEPARATION_FRACTION * n)
    rng = derive_rng(spec.layout_seed, "layout")
    for _ in range(MAX_LAYOUT_ATTEMPTS):
        start_idx, goal_idx = rng.choice(n * n, size=2, replace=False)
        start = (int(start_idx) // n, int(start_idx) % n)
        goal = (int(goal_idx) // n, int(goal_idx) % n)
        if abs(start[0] - goal[0]) + abs(start[1] - goal[1]) < min_separation:
            continue
        hazard = rng.random((n, n)) < spec.hazard_density
        hazard[start] = False
        hazard[goal] = False
        layout = Layout(grid_size=n, hazard=hazard, start=start, goal=goal)
        if goal_reachable(layout):
            return layout
    raise LayoutError(
        f"no solvable layout after {MAX_LAYOUT_ATTEMPTS} attempts "
        f"(grid_size={n}, hazard_density={spec.hazard_density})"
    )


def sample_task(dist: TaskDistribution, seed: int) -> TaskSpec:
    """Draw a TaskSpec from the distribution; pure function of (dist, seed)."""
    rng = derive_rng(seed, "task-spec")
    lo, hi = dist.grid_size_range
    size = int(rng.integers(lo, hi + 1))
    d_lo, d_hi = dist.hazard_density_range
    density = float(rng.uniform(d_lo, d_hi))
    spec = TaskSpec(
        grid_size=size,
        hazard_density=density,
        max_steps=dist.max_steps_factor * size,
        layout_seed=derive_seed(seed, "layout"),
    )
    build_layout(spec)  # raises LayoutError on inconsistent ranges
    return spec


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool
    info: dict = field(default_factory=dict)


class GridEnv:
    """Single-owner, mutable episode state over one task.

    Observation layout: window rows x window cols x 3 channels
    (wall, hazard, goal), row-major, flattened to float64 in {0, 1}.
    Cells beyond the grid boundary read as wall.
    """

    def __init__(self, task: TaskSpec, window_radius: int = DEFAULT_WINDOW_RADIUS):
        self._layout = build_layout(task)
        self._init(self._layout, task.max_steps, window_radius)

    @classmethod
    def from_layout(cls, layout: Layout, max_steps: int, window_radius: int = DEFAULT_WINDOW_RADIUS) -> "GridEnv":
        env = cls.__new__(cls)
        env._layout = layout
        env._init(layout, max_steps, window_radius)
        return env

    def _init(self, layout: Layout, max_steps: int, window_radius: int) -> None:
        if window_radius < 1:
            raise ValueError("window_radius must be >= 1")
        self.max_steps = max_steps
        self.window_radius = window_radius
        n, k = layout.grid_size, window_radius
        # Padded channel tensor; agent at (r, c) reads rows r..r+2k, cols c..c+2k.
        pad = np.zeros((n + 2 * k, n + 2 * k, 3))
        pad[:, :, 0] = 1.0
        pad[k : k + n, k : k + n, 0] = 0.0
        pad[k : k + n, k : k + n, 1] = layout.hazard
        pad[layout.goal[0] + k, layout.goal[1] + k, 2] = 1.0
        self._pad = pad
        self._pos: tuple[int, int] = layout.start
        self._t = 0
        self._done = False

    @property
    def obs_dim(self) -> int:
        side = 2 * self.window_radius + 1
        return side * side * 3

    @property
    def position(self) -> tuple[int, int]:
        return self._pos

    @property
    def steps_taken(self) -> int:
        return self._t

    @property
    def done(self) -> bool:
        return self._done

    def _observe(self) -> np.ndarray:
        r, c = self._pos
        side = 2 * self.window_radius + 1
        return self._pad[r : r + side, c : c + side, :].flatten()

    def reset(self) -> np.ndarray:
        self._pos = self._layout.start
        self._t = 0
        self._done = False
        return self._observe()

    def step(self, action: int) -> StepResult:
        if self._done:
            raise EpisodeDoneError("step() called after episode end; reset() first")
        if not 0 <= action < N_ACTIONS:
            raise ValueError(f"action must be in [0, {N_ACTIONS}), got {action}")
        n = self._layout.grid_size
        dr, dc = _MOVES[action]
        nr, nc = self._pos[0] + dr, self._pos[1] + dc
        if 0 <= nr < n and 0 <= nc < n:
            self._pos = (nr, nc)
        self._t += 1

        reward = 0.0
        if self._pos == self._layout.goal:
            reward = 1.0 - 0.9 * (self._t / self.max_steps)
            self._done = True
        elif self._layout.hazard[self._pos]:
            self._done = True
        elif self._t >= self.max_steps:
            self._done = True
        return StepResult(self._observe(), reward, self._done, {"t": self._t})
