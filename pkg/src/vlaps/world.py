"""Deterministic world models, tasks, and the scripted expert prior.

The desk-scale environment is a continuous 2D point robot with a gripper bit
("BlockNav"): pick up object ``i`` and carry it into region ``j``.  Dynamics
are fully deterministic; all stochasticity (initial-condition jitter, expert
noise) flows through explicitly passed generators.
"""

from __future__ import annotations

import json
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, ContractViolationError
from .rngutil import RngFactory, stable_hash


@dataclass
class StateVec:
    """Environment state: a fixed-dimension value vector plus a step counter."""

    values: np.ndarray
    step_count: int = 0

    def copy(self) -> "StateVec":
        return StateVec(self.values.copy(), self.step_count)


@dataclass(frozen=True)
class Observation:
    """Feature vector derived deterministically from a StateVec."""

    features: np.ndarray


@dataclass(frozen=True)
class TaskSpec:
    """A task: natural-language label plus a decidable goal predicate."""

    task_id: str
    instruction: str
    goal_predicate: Callable[[StateVec], bool]
    metadata: dict = field(default_factory=dict)

    def reward(self, state: StateVec) -> float:
        """Sparse reward: 1 exactly on goal states, 0 elsewhere."""
        return 1.0 if self.goal_predicate(state) else 0.0

    def to_json(self) -> dict:
        return {
            "task_id": self.task_id,
            "instruction": self.instruction,
            "goal": dict(self.metadata),
        }


class WorldModel(ABC):
    """Deterministic simulator interface used both as environment and planner model."""

    @property
    @abstractmethod
    def action_dim(self) -> int: ...

    @abstractmethod
    def reset(self, seed: int, task_id: str) -> StateVec: ...

    @abstractmethod
    def step(self, state: StateVec, action: np.ndarray) -> StateVec: ...

    @abstractmethod
    def observe(self, state: StateVec) -> Observation: ...

    def clone_state(self, state: StateVec) -> StateVec:
        return state.copy()


# BlockNav state layout: [rx, ry, grip, carried, ox0, oy0, ox1, oy1, ...]
_RX, _RY, _GRIP, _CARRIED = 0, 1, 2, 3

# fixed base placements (fractions of the extent); index 0 is deliberately far
# from region 2 so the hardest task needs a deep plan
_OBJECT_FRACTIONS = [
    (0.90, 0.10),
    (0.30, 0.60),
    (0.70, 0.35),
    (0.20, 0.30),
    (0.60, 0.75),
    (0.40, 0.15),
]
_REGION_FRACTIONS = [(0.15, 0.15), (0.85, 0.85), (0.15, 0.85)]


class BlockNavEnv(WorldModel):
    """Continuous 2D pick-and-place with a gripper bit.

    Primitive action: ``(dx, dy, g)`` with ``dx, dy`` clamped per component to
    ``max_step`` and ``g > 0`` closing the gripper, ``g <= 0`` opening it.
    Picking happens when the gripper closes within ``pick_radius`` of an
    object; a carried object tracks the robot until dropped.
    """

    def __init__(
        self,
        extent: float = 10.0,
        object_count: int = 2,
        max_step: float = 0.5,
        pick_radius: float = 0.35,
        region_radius: float = 0.6,
        jitter: float = 0.3,
    ):
        if extent <= 0:
            raise ConfigurationError(f"extent must be positive, got {extent}")
        if object_count < 1:
            raise ConfigurationError(f"object_count must be >= 1, got {object_count}")
        self.extent = float(extent)
        self.object_count = int(object_count)
        self.max_step = float(max_step)
        self.pick_radius = float(pick_radius)
        self.region_radius = float(region_radius)
        self.jitter = float(jitter)
        self.regions = np.array(_REGION_FRACTIONS) * self.extent
        base = [_OBJECT_FRACTIONS[i % len(_OBJECT_FRACTIONS)] for i in range(object_count)]
        self.base_object_positions = np.array(base) * self.extent
        self.state_dim = 4 + 2 * self.object_count

    # -- interface ---------------------------------------------------------

    @property
    def action_dim(self) -> int:
        return 3

    def reset(self, seed: int, task_id: str) -> StateVec:
        rng = RngFactory(seed, stable_hash(task_id)).rng(0)
        values = np.zeros(self.state_dim)
        values[_RX] = values[_RY] = self.extent / 2.0
        values[_GRIP] = -1.0
        values[_CARRIED] = -1.0
        offsets = rng.uniform(-self.jitter, self.jitter, size=(self.object_count, 2))
        positions = np.clip(self.base_object_positions + offsets, 0.0, self.extent)
        values[4:] = positions.ravel()
        return StateVec(values, step_count=0)

    def step(self, state: StateVec, action: np.ndarray) -> StateVec:
        action = np.asarray(action, dtype=float)
        if action.shape != (self.action_dim,):
            raise ContractViolationError(
                f"action shape {action.shape} != ({self.action_dim},)"
            )
        v = state.values.copy()
        dx = float(np.clip(action[0], -self.max_step, self.max_step))
        dy = float(np.clip(action[1], -self.max_step, self.max_step))
        v[_RX] = np.clip(v[_RX] + dx, 0.0, self.extent)
        v[_RY] = np.clip(v[_RY] + dy, 0.0, self.extent)

        g = action[2]
        if g > 0:
            v[_GRIP] = 1.0
        elif g < 0:
            v[_GRIP] = -1.0
        # g == 0 holds the current gripper setting

        carried = int(v[_CARRIED])
        if v[_GRIP] > 0 and carried < 0:
            idx = self._nearest_object(v)
            if idx >= 0:
                carried = idx
                v[_CARRIED] = float(idx)
        elif v[_GRIP] < 0 and carried >= 0:
            v[_CARRIED] = -1.0
            carried = -1
        if carried >= 0:
            v[4 + 2 * carried] = v[_RX]
            v[5 + 2 * carried] = v[_RY]
        return StateVec(v, state.step_count + 1)

    def observe(self, state: StateVec) -> Observation:
        return Observation(state.values.copy())

    # -- accessors ---------------------------------------------------------

    def robot_position(self, state: StateVec) -> np.ndarray:
        return state.values[_RX:_RY + 1].copy()

    def object_position(self, state: StateVec, index: int) -> np.ndarray:
        return state.values[4 + 2 * index: 6 + 2 * index].copy()

    def carried_index(self, state: StateVec) -> int:
        return int(state.values[_CARRIED])

    def state_from_observation(self, obs: Observation) -> StateVec:
        # the desk-scale observation is the full state vector
        return StateVec(np.asarray(obs.features, dtype=float).copy(), step_count=0)

    def _nearest_object(self, values: np.ndarray) -> int:
        pos = values[_RX:_RY + 1]
        objects = values[4:].reshape(self.object_count, 2)
        dists = np.linalg.norm(objects - pos, axis=1)
        idx = int(np.argmin(dists))
        return idx if dists[idx] <= self.pick_radius else -1

    # -- tasks --------------------------------------------------------------

    def tasks(self) -> list[TaskSpec]:
        out = []
        for i in range(self.object_count):
            for j in range(len(self.regions)):
                out.append(self._make_task(i, j))
        return out

    def task_by_id(self, task_id: str) -> TaskSpec:
        for task in self.tasks():
            if task.task_id == task_id:
                return task
        raise ConfigurationError(f"unknown task_id {task_id!r}")

    def _make_task(self, obj: int, region: int) -> TaskSpec:
        center = self.regions[region]
        radius = self.region_radius

        def goal(state: StateVec, _obj=obj, _center=center, _radius=radius) -> bool:
            if int(state.values[_CARRIED]) == _obj:
                return False
            pos = state.values[4 + 2 * _obj: 6 + 2 * _obj]
            return bool(np.linalg.norm(pos - _center) <= _radius)

        return TaskSpec(
            task_id=f"move_obj{obj}_to_region{region}",
            instruction=f"move object {obj} to region {region}",
            goal_predicate=goal,
            metadata={
                "object_index": obj,
                "region_index": region,
                "region_center": [float(center[0]), float(center[1])],
                "region_radius": radius,
            },
        )

    def to_json(self) -> dict:
        return {
            "name": "blocknav",
            "extent": self.extent,
            "object_count": self.object_count,
            "max_step": self.max_step,
            "pick_radius": self.pick_radius,
            "region_radius": self.region_radius,
            "jitter": self.jitter,
            "regions": self.regions.tolist(),
            "base_object_positions": self.base_object_positions.tolist(),
            "tasks": [t.to_json() for t in self.tasks()],
        }

    @classmethod
    def from_json(cls, data: dict) -> "BlockNavEnv":
        return cls(
            extent=data["extent"],
            object_count=data["object_count"],
            max_step=data["max_step"],
            pick_radius=data["pick_radius"],
            region_radius=data["region_radius"],
            jitter=data["jitter"],
        )


def make_blocknav_env(
    grid_extent: float = 10.0, object_count: int = 2
) -> tuple[BlockNavEnv, list[TaskSpec]]:
    """Build the desk-scale pick-and-place environment and its task list."""
    env = BlockNavEnv(extent=grid_extent, object_count=object_count)
    return env, env.tasks()


def step_macro(
    model: WorldModel,
    state: StateVec,
    macro: np.ndarray,
    task: TaskSpec,
    meter=None,
) -> tuple[StateVec, bool, int]:
    """Apply the rows of a macro-action in order, stopping early on goal.

    Returns the resulting state, whether the goal predicate held, and the
    number of primitives actually applied.
    """
    macro = np.asarray(macro, dtype=float)
    if macro.ndim != 2 or macro.shape[1] != model.action_dim:
        raise ContractViolationError(
            f"macro shape {macro.shape} incompatible with action_dim {model.action_dim}"
        )
    if task.goal_predicate(state):
        return state, True, 0
    steps = 0
    for row in macro:
        state = model.step(state, row)
        steps += 1
        if meter is not None:
            meter.add_steps(1)
        if task.goal_predicate(state):
            return state, True, steps
    return state, False, steps


# -- scripted expert ---------------------------------------------------------

_DROP_FRACTION = 0.5  # drop once within this fraction of the region radius


def greedy_expert_action(env: BlockNavEnv, state: StateVec, task: TaskSpec) -> np.ndarray:
    """One step of the deterministic greedy controller for a BlockNav task."""
    if task.goal_predicate(state):
        return np.array([0.0, 0.0, -1.0])
    obj = task.metadata["object_index"]
    center = np.asarray(task.metadata["region_center"])
    carried = env.carried_index(state)
    robot = env.robot_position(state)

    if carried == obj:
        delta = center - robot
        if np.linalg.norm(delta) <= env.region_radius * _DROP_FRACTION:
            return np.array([0.0, 0.0, -1.0])
        return np.array([*_clip_step(delta, env.max_step), 1.0])
    if carried >= 0:
        # holding the wrong object: release it
        return np.array([0.0, 0.0, -1.0])

    target = env.object_position(state, obj)
    delta = target - robot
    if np.linalg.norm(delta) <= env.pick_radius * 0.8:
        return np.array([0.0, 0.0, 1.0])
    return np.array([*_clip_step(delta, env.max_step), -1.0])


def _clip_step(delta: np.ndarray, max_step: float) -> np.ndarray:
    norm = float(np.linalg.norm(delta))
    if norm > max_step:
        return delta * (max_step / norm)
    return delta


class ScriptedExpertPrior:
    """Greedy BlockNav controller exposed through the prior-policy interface.

    ``noise_level`` independently replaces each primitive with a uniformly
    random action; at 0 this is the deterministic expert.  The prior simulates
    its own copy of the environment for the length of one macro-action.
    """

    thread_safe = True

    def __init__(self, env: BlockNavEnv, horizon: int, noise_level: float = 0.0):
        if not 0.0 <= noise_level <= 1.0:
            raise ConfigurationError(f"noise_level must be in [0,1], got {noise_level}")
        self.env = env
        self.horizon = int(horizon)
        self.noise_level = float(noise_level)

    def sample_macro(
        self, obs: Observation, task: TaskSpec, rng: np.random.Generator
    ) -> np.ndarray:
        state = self.env.state_from_observation(obs)
        rows = []
        for _ in range(self.horizon):
            action = greedy_expert_action(self.env, state, task)
            if self.noise_level > 0.0 and rng.random() < self.noise_level:
                action = np.array([
                    rng.uniform(-self.env.max_step, self.env.max_step),
                    rng.uniform(-self.env.max_step, self.env.max_step),
                    rng.uniform(-1.0, 1.0),
                ])
            state = self.env.step(state, action)
            rows.append(action)
        return np.array(rows)


def run_expert_episode(
    env: BlockNavEnv,
    task: TaskSpec,
    seed: int,
    noise_level: float = 0.0,
    max_steps: int = 100,
    rng: Optional[np.random.Generator] = None,
) -> tuple[list[np.ndarray], np.ndarray, bool]:
    """Roll the (possibly noisy) expert in the true environment.

    Returns (visited states' value vectors, action matrix, success flag);
    states exclude the terminal state so that states[i] pairs with actions[i].
    """
    if rng is None:
        rng = RngFactory(seed, stable_hash(task.task_id)).rng(9)
    state = env.reset(seed, task.task_id)
    states, actions = [], []
    success = task.goal_predicate(state)
    for _ in range(max_steps):
        if success:
            break
        action = greedy_expert_action(env, state, task)
        if noise_level > 0.0 and rng.random() < noise_level:
            action = np.array([
                rng.uniform(-env.max_step, env.max_step),
                rng.uniform(-env.max_step, env.max_step),
                rng.uniform(-1.0, 1.0),
            ])
        states.append(state.values.copy())
        actions.append(action)
        state = env.step(state, action)
        success = task.goal_predicate(state)
    return states, np.array(actions).reshape(len(actions), env.action_dim), success
