"""Finite-action product-of-experts composition and its variational objective."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

NORMALIZATION_TOL = 1e-10
MAX_ORACLE_ACTIONS = 5


class EmptySupportError(ValueError):
    """Actor and prior share no action with positive mass."""


@dataclass(frozen=True)
class FinitePolicy:
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("probs must be a nonempty 1-d vector")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("probs must be finite and non-negative")
        if abs(p.sum() - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"probs sum to {p.sum()!r}, not 1")
        object.__setattr__(self, "probs", p)

    def __len__(self):
        return self.probs.size

    @property
    def support(self) -> np.ndarray:
        return self.probs > 0


def _check_sizes(*policies: FinitePolicy):
    sizes = {len(p) for p in policies}
    if len(sizes) != 1:
        raise ValueError(f"action-set size mismatch: {sorted(sizes)}")


def effective_support(actor: FinitePolicy, prior: FinitePolicy) -> np.ndarray:
    _check_sizes(actor, prior)
    return actor.support & prior.support


def poe_finite(actor: FinitePolicy, prior: FinitePolicy, alpha: float) -> FinitePolicy:
    """Normalized actor^alpha * prior^(1-alpha).

    At alpha == 1 the prior exponent is zero, but the product is still
    restricted to the common support so the result stays a member of the
    same family as for alpha < 1.
    """
    _check_sizes(actor, prior)
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    gamma = effective_support(actor, prior)
    if not gamma.any():
        raise EmptySupportError("actor and prior have disjoint supports")
    logits = np.full(len(actor), -np.inf)
    logits[gamma] = alpha * np.log(actor.probs[gamma]) + (1 - alpha) * np.log(prior.probs[gamma])
    logits -= logits[gamma].max()
    w = np.exp(logits)
    return FinitePolicy(w / w.sum())


def _feasible(candidate: FinitePolicy, gamma: np.ndarray) -> bool:
    return not np.any(candidate.probs[~gamma] > 0)


def variational_value(candidate: FinitePolicy, actor: FinitePolicy, prior: FinitePolicy, alpha: float) -> float:
    """Cross term E_p[alpha log actor + (1-alpha) log prior] plus entropy H(p).

    Returns -inf when the candidate puts mass outside the common support.
    """
    _check_sizes(candidate, actor, prior)
    gamma = effective_support(actor, prior)
    if not _feasible(candidate, gamma):
        return -np.inf
    p = candidate.probs
    on = p > 0
    cross = np.sum(p[on] * (alpha * np.log(actor.probs[on]) + (1 - alpha) * np.log(prior.probs[on])))
    entropy = -np.sum(p[on] * np.log(p[on]))
    return float(cross + entropy)


def finite_kl(p: FinitePolicy, q: FinitePolicy) -> float:
    _check_sizes(p, q)
    on = p.probs > 0
    if np.any(q.probs[on] == 0):
        return np.inf
    return float(np.sum(p.probs[on] * (np.log(p.probs[on]) - np.log(q.probs[on]))))


def weighted_kl_value(candidate: FinitePolicy, actor: FinitePolicy, prior: FinitePolicy, alpha: float) -> float:
    _check_sizes(candidate, actor, prior)
    gamma = effective_support(actor, prior)
    if not _feasible(candidate, gamma):
        return np.inf
    value = alpha * finite_kl(candidate, actor) + (1 - alpha) * finite_kl(candidate, prior)
    # at alpha == 1 the prior term is 0 * finite, not 0 * inf
    return float(max(value, 0.0))


def simplex_grid(n: int, step: float):
    """Yield every point of the n-simplex with coordinates in multiples of step.

    Enumeration is lexicographic in the first n-1 coordinates.
    """
    yield from _simplex_points(n, _grid_count(step))


def _grid_count(step: float) -> int:
    k = int(round(1.0 / step))
    if not np.isclose(k * step, 1.0):
        raise ValueError(f"grid_step {step} must divide 1")
    return k


@lru_cache(maxsize=16)
def _simplex_points(n: int, k: int) -> np.ndarray:
    heads = np.stack(np.meshgrid(*[np.arange(k + 1)] * (n - 1), indexing="ij"), axis=-1).reshape(-1, n - 1)
    heads = heads[heads.sum(axis=1) <= k]
    pts = np.concatenate([heads, k - heads.sum(axis=1, keepdims=True)], axis=1) / k
    pts.setflags(write=False)
    return pts


def brute_force_barycenter(actor: FinitePolicy, prior: FinitePolicy, alpha: float, grid_step: float) -> FinitePolicy:
    """Exhaustive simplex-grid maximizer of variational_value.

    Oracle for the closed form; cost grows like (1/grid_step)^(n-1).
    Ties resolve to the first grid point in lexicographic order.
    """
    _check_sizes(actor, prior)
    n = len(actor)
    if n > MAX_ORACLE_ACTIONS:
        raise ValueError(f"oracle limited to {MAX_ORACLE_ACTIONS} actions, got {n}")
    if not 0.0 < grid_step <= 0.1:
        raise ValueError("grid_step must lie in (0, 0.1]")
    gamma = effective_support(actor, prior)
    if not gamma.any():
        raise EmptySupportError("actor and prior have disjoint supports")
    points = _grid_on_support(n, grid_step, gamma)
    values = _grid_values(points, actor, prior, alpha)
    best = int(np.argmax(values))  # argmax returns the first maximizer
    return FinitePolicy(points[best])


def _grid_on_support(n, grid_step, gamma):
    idx = np.flatnonzero(gamma)
    sub = _simplex_points(idx.size, _grid_count(grid_step))
    points = np.zeros((sub.shape[0], n))
    points[:, idx] = sub
    return points


def _grid_values(points, actor, prior, alpha):
    gamma = effective_support(actor, prior)
    score = np.zeros(len(actor))
    score[gamma] = alpha * np.log(actor.probs[gamma]) + (1 - alpha) * np.log(prior.probs[gamma])
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(points > 0, points * np.log(points), 0.0)
    return points @ score - plogp.sum(axis=1)


def grid_values(actor: FinitePolicy, prior: FinitePolicy, alpha: float, grid_step: float) -> np.ndarray:
    """Objective values at every feasible grid point (vectorized oracle sweep)."""
    gamma = effective_support(actor, prior)
    return _grid_values(_grid_on_support(len(actor), grid_step, gamma), actor, prior, alpha)


def tv_distance(p: FinitePolicy, q: FinitePolicy) -> float:
    _check_sizes(p, q)
    return float(0.5 * np.abs(p.probs - q.probs).sum())


def mc_tv_finite(p: FinitePolicy, q: FinitePolicy, n_samples: int, rng: np.random.Generator) -> float:
    """Sampled TV: actions from the mixture (p + q) / 2, averaging |p - q| / (p + q)."""
    _check_sizes(p, q)
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    m = 0.5 * (p.probs + q.probs)
    a = rng.choice(len(m), size=n_samples, p=m / m.sum())
    return float(np.mean(np.abs(p.probs[a] - q.probs[a]) / (p.probs[a] + q.probs[a])))
