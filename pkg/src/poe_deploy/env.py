"""Deterministic point-mass environment with (forward, control, alive) rewards.

State layout is [position (d), velocity (d)]. Axis 0 is the forward axis and
is unbounded; the remaining (lateral) axes have an unstable restoring term
and terminate the episode when they leave the workspace, which plays the
role of a locomotion agent falling over.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

COMPONENTS = ("forward", "control", "alive")


@dataclass(frozen=True)
class EnvConfig:
    action_dim: int = 2
    dt: float = 0.1
    workspace_halfwidth: float = 2.0
    max_steps: int = 200
    drag: float = 0.5
    termination: str = "lateral"  # "lateral" | "all" | "none"
    lateral_instability: float = 1.0
    action_limit: float = 2.0
    # commanded actions are snapped to this actuator grid (a power of two)
    actuator_resolution: float = 2.0**-20
    init_position_scale: float = 0.2
    init_velocity_scale: float = 0.1

    def __post_init__(self):
        if self.action_dim < 1:
            raise ValueError("action_dim must be >= 1")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.termination not in ("lateral", "all", "none"):
            raise ValueError(f"unknown termination rule {self.termination!r}")
        if not self.actuator_resolution >= 0:
            raise ValueError("actuator_resolution must be >= 0")

    @property
    def state_dim(self) -> int:
        return 2 * self.action_dim

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Goal:
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if w.shape != (3,) or not np.all(np.isfinite(w)):
            raise ValueError("goal must be a finite 3-vector")
        object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: np.ndarray
    rc: np.ndarray
    next_state: np.ndarray
    done: bool


@dataclass(frozen=True)
class EpisodeRecord:
    method_id: str
    goal_id: str
    seed: int
    episode_index: int
    goal_weighted_return: float
    raw_component_sums: tuple
    length: int
    mean_kl_from_actor: float


def _lateral_mask(config: EnvConfig) -> np.ndarray:
    mask = np.ones(config.action_dim)
    mask[0] = 0.0
    return mask


def _out_of_workspace(config: EnvConfig, pos: np.ndarray) -> np.ndarray:
    if config.termination == "none":
        return np.zeros(pos.shape[:-1], dtype=bool)
    check = pos if config.termination == "all" else pos[..., 1:]
    if check.shape[-1] == 0:
        return np.zeros(pos.shape[:-1], dtype=bool)
    return np.any(np.abs(check) > config.workspace_halfwidth, axis=-1)


def apply_actuator(config: EnvConfig, action: np.ndarray) -> np.ndarray:
    a = np.clip(action, -config.action_limit, config.action_limit)
    res = config.actuator_resolution
    if res > 0:
        a = np.round(a / res) * res
    return a


def dynamics(config: EnvConfig, state: np.ndarray, action: np.ndarray):
    """Batched physics update; returns (next_state, rc, left_workspace).

    No step-budget bookkeeping happens here.
    """
    d = config.action_dim
    state = np.asarray(state, dtype=np.float64)
    action = np.asarray(action, dtype=np.float64)
    if state.shape[-1] != 2 * d or action.shape[-1] != d:
        raise ValueError("state/action dimension does not match config")
    if not (np.all(np.isfinite(state)) and np.all(np.isfinite(action))):
        raise ValueError("non-finite state or action")
    a = apply_actuator(config, action)
    pos, vel = state[..., :d], state[..., d:]
    acc = a - config.drag * vel + config.lateral_instability * _lateral_mask(config) * pos
    vel2 = vel + config.dt * acc
    pos2 = pos + config.dt * vel2
    rc = np.stack([vel2[..., 0], -np.sum(a * a, axis=-1), np.ones(vel2.shape[:-1])], axis=-1)
    return np.concatenate([pos2, vel2], axis=-1), rc, _out_of_workspace(config, pos2)


def env_step(config: EnvConfig, state, action, t: int = 0):
    """One step from time index t. Returns (next_state, rc, done).

    done is set when the position leaves the workspace or when step t + 1
    exhausts the budget. The alive component is 1 on every executed step,
    including the terminating one.
    """
    next_state, rc, left = dynamics(config, state, action)
    done = bool(left) or (t + 1 >= config.max_steps)
    return next_state, rc, done


def observation(states) -> np.ndarray:
    """What policies and critics see: the state without the forward position.

    The task is invariant to forward translation, and the forward position
    grows without bound over an episode.
    """
    return np.asarray(states, dtype=np.float64)[..., 1:]


def reset_state(config: EnvConfig, rng: np.random.Generator) -> np.ndarray:
    d = config.action_dim
    pos = rng.uniform(-config.init_position_scale, config.init_position_scale, size=d)
    pos[0] = 0.0
    vel = rng.uniform(-config.init_velocity_scale, config.init_velocity_scale, size=d)
    return np.concatenate([pos, vel])


def episode_rng(seed: int, episode_index: int) -> np.random.Generator:
    """Initial-state generator keyed by (seed, episode) only.

    Every method sees the same start states for a given (seed, episode), so
    comparisons across methods are seed-matched.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(episode_index)]))


def behavior_dataset(config: EnvConfig, behavior_policy, n_transitions: int, seed: int) -> list[Transition]:
    """Roll out a stochastic behavior policy, resetting on termination."""
    if n_transitions < 1:
        raise ValueError("n_transitions must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xBEEF]))
    data: list[Transition] = []
    state = reset_state(config, rng)
    t = 0
    while len(data) < n_transitions:
        dist = behavior_policy(state[None])
        action = dist.mean[0] + dist.std[0] * rng.standard_normal(config.action_dim)
        action = apply_actuator(config, action)
        next_state, rc, done = env_step(config, state, action, t)
        data.append(Transition(state, action, rc, next_state, done))
        if done:
            state, t = reset_state(config, rng), 0
        else:
            state, t = next_state, t + 1
    return data


def stack_transitions(data: list[Transition]) -> dict:
    return {
        "state": np.array([tr.state for tr in data]),
        "action": np.array([tr.action for tr in data]),
        "rc": np.array([tr.rc for tr in data]),
        "next_state": np.array([tr.next_state for tr in data]),
        "done": np.array([tr.done for tr in data], dtype=np.float64),
    }


def run_episodes(config: EnvConfig, rule, starts: np.ndarray):
    """Lock-step deterministic rollouts from a batch of start states.

    Returns (component_sums (n, 3), lengths (n,), kl_sums (n,), visited)
    where visited is a list of per-step state batches restricted to the
    episodes still running at that step.
    """
    n = starts.shape[0]
    state = starts.copy()
    sums = np.zeros((n, 3))
    kl_sums = np.zeros(n)
    lengths = np.zeros(n, dtype=np.int64)
    active = np.ones(n, dtype=bool)
    visited = []
    for t in range(config.max_steps):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        s = state[idx]
        visited.append(s)
        action, kl = rule.act(s)
        next_s, rc, left = dynamics(config, s, action)
        sums[idx] += rc
        kl_sums[idx] += kl
        lengths[idx] += 1
        state[idx] = next_s
        finished = left | (t + 1 >= config.max_steps)
        active[idx[finished]] = False
    return sums, lengths, kl_sums, visited


def rollout(config: EnvConfig, rule, goal: Goal, seeds, episodes_per_seed: int, method_id: str = "", goal_id: str = "", return_states: bool = False):
    """Deterministic (mean-action) deployment over seeds x episodes."""
    seeds = list(seeds)
    if not seeds:
        raise ValueError("seeds must be nonempty")
    if episodes_per_seed < 1:
        raise ValueError("episodes_per_seed must be >= 1")
    if getattr(rule, "action_dim", config.action_dim) != config.action_dim:
        raise ValueError("policy action dimension does not match the environment")
    keys = [(s, e) for s in seeds for e in range(episodes_per_seed)]
    starts = np.array([reset_state(config, episode_rng(s, e)) for s, e in keys])
    sums, lengths, kl_sums, visited = run_episodes(config, rule, starts)
    g = goal.weights
    records = []
    for i, (s, e) in enumerate(keys):
        comp = sums[i]
        records.append(
            EpisodeRecord(
                method_id=method_id,
                goal_id=goal_id,
                seed=int(s),
                episode_index=int(e),
                goal_weighted_return=float(g @ comp),
                raw_component_sums=tuple(float(c) for c in comp),
                length=int(lengths[i]),
                mean_kl_from_actor=float(kl_sums[i] / lengths[i]),
            )
        )
    if return_states:
        return records, np.concatenate(visited, axis=0)
    return records
