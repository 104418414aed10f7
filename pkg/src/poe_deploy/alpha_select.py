"""Choosing alpha: KL-budget and validation-best rules, scored on a test split."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AlphaGridResult:
    alpha: float
    val_return: float
    test_return: float
    val_kl: float
    test_kl: float

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.val_kl < 0 or self.test_kl < 0:
            raise ValueError("KL values must be nonnegative")


def _sorted(grid) -> list[AlphaGridResult]:
    g = sorted(grid, key=lambda r: r.alpha)
    if not g:
        raise ValueError("empty grid")
    alphas = [r.alpha for r in g]
    if len(set(alphas)) != len(alphas):
        raise ValueError("alpha values must be distinct")
    return g


def kl_budget_select(grid, kappa: float) -> float:
    """Smallest alpha whose validation KL fits the budget.

    If nothing fits, fall back to the alpha with the least validation KL,
    preferring the larger alpha on ties.
    """
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    g = _sorted(grid)
    for r in g:
        if r.val_kl <= kappa:
            return r.alpha
    least = min(r.val_kl for r in g)
    return max(r.alpha for r in g if r.val_kl == least)


def val_best_select(grid) -> float:
    g = _sorted(grid)
    best = max(r.val_return for r in g)
    return max(r.alpha for r in g if r.val_return == best)


def oracle_select(grid) -> float:
    """Test-split best alpha (the hindsight reference), larger alpha on ties."""
    g = _sorted(grid)
    best = max(r.test_return for r in g)
    return max(r.alpha for r in g if r.test_return == best)


def selection_loss(selected: float, grid) -> float:
    g = _sorted(grid)
    match = [r for r in g if r.alpha == selected]
    if not match:
        raise ValueError(f"alpha {selected} is not in the grid")
    return float(max(r.test_return for r in g) - match[0].test_return)


def row_for(alpha: float, grid) -> AlphaGridResult:
    for r in grid:
        if r.alpha == alpha:
            return r
    raise ValueError(f"alpha {alpha} is not in the grid")


def is_nonincreasing(x) -> bool:
    x = np.asarray(x, dtype=np.float64)
    return bool(np.all(np.diff(x) <= 0))
