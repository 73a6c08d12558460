"""Macro-action representation, distance metric, and prototype library.

A macro-action is an ``(H, n)`` array of primitive actions.  The library is a
finite prototype set extracted from demonstration trajectories by PAM-style
K-Medoids (greedy BUILD initialization followed by best-improvement SWAP
passes), run on per-dimension-normalized flattened macros.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
from scipy.spatial.distance import cdist

from .errors import (
    ConfigurationError,
    ContractViolationError,
    DegenerateLibraryError,
)

LIBRARY_FORMAT_VERSION = 1
_STD_CLAMP = 1e-12  # dimensions with smaller spread are treated as constant
_MAX_PAM_CANDIDATES = 1000
_MAX_SWAP_PASSES = 100
_PAM_RESTARTS = 8


@dataclass
class Trajectory:
    """A logged episode: per-step states and actions plus the outcome flag."""

    states: list
    actions: np.ndarray  # (T, n)
    success: bool
    task_id: str = ""

    def __post_init__(self):
        self.actions = np.asarray(self.actions, dtype=float)
        if len(self.states) != len(self.actions):
            raise ContractViolationError(
                f"{len(self.states)} states vs {len(self.actions)} actions"
            )
        if len(self.actions) == 0:
            raise ContractViolationError("trajectory must be non-empty")


def save_trajectories(trajs: Iterable[Trajectory], path) -> None:
    """Write JSON-lines: one record per primitive step {state, action, reward}."""
    with open(path, "w") as fh:
        for ti, traj in enumerate(trajs):
            last = len(traj.actions) - 1
            for si, (state, action) in enumerate(zip(traj.states, traj.actions)):
                record = {
                    "traj_id": ti,
                    "task_id": traj.task_id,
                    "success": bool(traj.success),
                    "state": np.asarray(state, dtype=float).tolist(),
                    "action": action.tolist(),
                    # sparse reward is only attainable on the terminal step
                    "reward": 1.0 if (traj.success and si == last) else 0.0,
                }
                fh.write(json.dumps(record) + "\n")


def load_trajectories(path) -> list[Trajectory]:
    groups: dict[int, dict] = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            g = groups.setdefault(
                rec["traj_id"],
                {"states": [], "actions": [], "success": rec["success"],
                 "task_id": rec.get("task_id", "")},
            )
            g["states"].append(np.asarray(rec["state"], dtype=float))
            g["actions"].append(rec["action"])
    return [
        Trajectory(g["states"], np.asarray(g["actions"]), g["success"], g["task_id"])
        for _, g in sorted(groups.items())
    ]


def segment_trajectories(trajs: Iterable[Trajectory], horizon: int) -> list[np.ndarray]:
    """Chop successful trajectories into non-overlapping macros of length H.

    A trailing remainder shorter than H is dropped; failed trajectories
    contribute nothing.
    """
    if horizon < 1:
        raise ConfigurationError(f"horizon must be >= 1, got {horizon}")
    macros = []
    for traj in trajs:
        if not traj.success:
            continue
        count = len(traj.actions) // horizon
        for c in range(count):
            macros.append(traj.actions[c * horizon:(c + 1) * horizon].copy())
    return macros


def rho(
    u1: np.ndarray,
    u2: np.ndarray,
    per_dim_mean: Optional[np.ndarray] = None,
    per_dim_std: Optional[np.ndarray] = None,
) -> float:
    """Euclidean distance between flattened macro-actions.

    When normalization statistics are given, both macros are standardized per
    action dimension first (scale-invariant coordinates).
    """
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    if u1.shape != u2.shape or u1.ndim != 2:
        raise ContractViolationError(f"macro shapes differ: {u1.shape} vs {u2.shape}")
    if per_dim_mean is not None:
        u1 = (u1 - per_dim_mean) / per_dim_std
        u2 = (u2 - per_dim_mean) / per_dim_std
    return float(np.linalg.norm((u1 - u2).ravel()))


@dataclass
class MacroLibrary:
    """Finite prototype set with its normalization statistics."""

    prototypes: np.ndarray  # (m, H, n), raw action units
    per_dim_mean: np.ndarray  # (n,)
    per_dim_std: np.ndarray  # (n,), strictly positive

    def __post_init__(self):
        self.prototypes = np.asarray(self.prototypes, dtype=float)
        self.per_dim_mean = np.asarray(self.per_dim_mean, dtype=float)
        self.per_dim_std = np.asarray(self.per_dim_std, dtype=float)
        if self.prototypes.ndim != 3:
            raise ContractViolationError("prototypes must have shape (m, H, n)")
        if np.any(self.per_dim_std <= 0):
            raise ContractViolationError("per_dim_std must be strictly positive")

    @property
    def m(self) -> int:
        return self.prototypes.shape[0]

    @property
    def horizon(self) -> int:
        return self.prototypes.shape[1]

    @property
    def action_dim(self) -> int:
        return self.prototypes.shape[2]

    def normalize(self, macros: np.ndarray) -> np.ndarray:
        return (np.asarray(macros, dtype=float) - self.per_dim_mean) / self.per_dim_std

    def denormalize(self, macros: np.ndarray) -> np.ndarray:
        return np.asarray(macros, dtype=float) * self.per_dim_std + self.per_dim_mean

    def distances_to(self, macro: np.ndarray, normalized: bool = True) -> np.ndarray:
        """Vector of rho(prototype_i, macro) over the whole library."""
        macro = np.asarray(macro, dtype=float)
        if macro.shape != self.prototypes.shape[1:]:
            raise ContractViolationError(
                f"macro shape {macro.shape} != {self.prototypes.shape[1:]}"
            )
        if normalized:
            flat = self.normalize(self.prototypes).reshape(self.m, -1)
            target = self.normalize(macro).ravel()
        else:
            flat = self.prototypes.reshape(self.m, -1)
            target = macro.ravel()
        return np.linalg.norm(flat - target, axis=1)

    def to_json(self) -> dict:
        return {
            "format_version": LIBRARY_FORMAT_VERSION,
            "H": self.horizon,
            "n": self.action_dim,
            "m": self.m,
            "per_dim_mean": self.per_dim_mean.tolist(),
            "per_dim_std": self.per_dim_std.tolist(),
            "prototypes": self.prototypes.tolist(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "MacroLibrary":
        if data.get("format_version") != LIBRARY_FORMAT_VERSION:
            raise ConfigurationError(
                f"unsupported library format_version {data.get('format_version')}"
            )
        lib = cls(
            prototypes=np.asarray(data["prototypes"], dtype=float),
            per_dim_mean=np.asarray(data["per_dim_mean"], dtype=float),
            per_dim_std=np.asarray(data["per_dim_std"], dtype=float),
        )
        if lib.m != data["m"] or lib.horizon != data["H"] or lib.action_dim != data["n"]:
            raise ConfigurationError("library header does not match prototype array")
        return lib

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path) -> "MacroLibrary":
        return cls.from_json(json.loads(Path(path).read_text()))


def build_library(
    macros: list[np.ndarray],
    m: int,
    seed: int,
    max_candidates: int = _MAX_PAM_CANDIDATES,
    history: Optional[list] = None,
) -> MacroLibrary:
    """Cluster a macro corpus into m medoid prototypes (PAM, deterministic).

    Normalization statistics are computed over all primitive actions of the
    input corpus; clustering runs in those normalized coordinates.  ``seed``
    only matters when the corpus is subsampled to ``max_candidates``.
    """
    if m < 2:
        raise ConfigurationError(f"library size must be >= 2, got {m}")
    if len(macros) < m:
        raise ConfigurationError(
            f"need at least m={m} candidate macros, got {len(macros)}"
        )
    stack = np.asarray(macros, dtype=float)
    if stack.ndim != 3:
        raise ContractViolationError("macros must all share shape (H, n)")

    per_dim_mean = stack.reshape(-1, stack.shape[2]).mean(axis=0)
    per_dim_std = stack.reshape(-1, stack.shape[2]).std(axis=0)
    per_dim_std = np.where(per_dim_std < _STD_CLAMP, 1.0, per_dim_std)

    flat = ((stack - per_dim_mean) / per_dim_std).reshape(stack.shape[0], -1)
    _, unique_idx = np.unique(flat, axis=0, return_index=True)
    unique_idx = np.sort(unique_idx)
    if len(unique_idx) == 1:
        raise DegenerateLibraryError("all candidate macros are identical")
    if len(unique_idx) < m:
        raise ConfigurationError(
            f"only {len(unique_idx)} distinct macros available for m={m}"
        )
    stack, flat = stack[unique_idx], flat[unique_idx]

    if len(stack) > max_candidates:
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(len(stack), size=max_candidates, replace=False))
        stack, flat = stack[keep], flat[keep]

    medoids = _pam(cdist(flat, flat), m, seed=seed, history=history)
    return MacroLibrary(stack[medoids], per_dim_mean, per_dim_std)


def pam_objective(dist: np.ndarray, medoids: np.ndarray) -> float:
    """Total distance from every point to its nearest medoid."""
    return float(dist[:, medoids].min(axis=1).sum())


def _pam(
    dist: np.ndarray,
    m: int,
    seed: int = 0,
    history: Optional[list] = None,
    restarts: int = _PAM_RESTARTS,
) -> np.ndarray:
    """Multi-start PAM: BUILD init plus seeded random restarts, best kept."""
    n_points = dist.shape[0]
    if m == n_points:
        return np.arange(n_points)

    # BUILD: greedily add the medoid giving the largest cost reduction
    medoids = [int(np.argmin(dist.sum(axis=1)))]
    nearest = dist[:, medoids[0]].copy()
    while len(medoids) < m:
        costs = np.minimum(dist, nearest[:, None]).sum(axis=0)
        costs[medoids] = np.inf
        best = int(np.argmin(costs))
        medoids.append(best)
        nearest = np.minimum(nearest, dist[:, best])

    best_medoids, best_cost = _swap(dist, np.array(sorted(medoids)), history)

    rng = np.random.default_rng(seed)
    for _ in range(restarts):
        init = np.sort(rng.choice(n_points, size=m, replace=False))
        med, cost = _swap(dist, init, None)
        if cost < best_cost - 1e-12:
            best_medoids, best_cost = med, cost
    return best_medoids


def _swap(
    dist: np.ndarray, medoids: np.ndarray, history: Optional[list]
) -> tuple[np.ndarray, float]:
    n_points = dist.shape[0]
    cost = pam_objective(dist, medoids)
    if history is not None:
        history.append(cost)

    # SWAP: best-improvement passes until convergence
    for _ in range(_MAX_SWAP_PASSES):
        med_dist = dist[:, medoids]
        order = np.argsort(med_dist, axis=1)
        nearest_pos = order[:, 0]
        nearest_d = med_dist[np.arange(n_points), nearest_pos]
        second_d = med_dist[np.arange(n_points), order[:, 1]]
        non_medoids = np.setdiff1d(np.arange(n_points), medoids)

        best_cost, best_swap = cost, None
        for pos, j in enumerate(medoids):
            without_j = np.where(nearest_pos == pos, second_d, nearest_d)
            cand_costs = np.minimum(dist[:, non_medoids], without_j[:, None]).sum(axis=0)
            h = int(np.argmin(cand_costs))
            if cand_costs[h] < best_cost - 1e-12:
                best_cost, best_swap = float(cand_costs[h]), (pos, int(non_medoids[h]))
        if best_swap is None:
            break
        medoids = medoids.copy()
        medoids[best_swap[0]] = best_swap[1]
        medoids = np.sort(medoids)
        assert best_cost <= cost + 1e-12  # objective never increases
        cost = best_cost
        if history is not None:
            history.append(cost)
    return medoids, cost
