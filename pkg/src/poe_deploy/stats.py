"""Bootstrap intervals, seed-matched paired differences, and the cell classifier."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LABELS = ("Help", "Frozen", "Hurt")


def _as_values(values) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise ValueError("empty input")
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite values")
    return v


def bootstrap_ci(values, level: float = 0.95, resamples: int = 10_000, seed: int = 0, strata=None) -> tuple[float, float]:
    """Percentile bootstrap interval for the mean.

    With `strata` (e.g. the seed of each episode), indices are resampled
    within each stratum, so every replicate keeps the per-seed counts.
    Values are sorted (within strata) before resampling, which makes the
    interval a function of the multiset of values and not of their order.
    The interval is widened if needed so it always contains the sample mean.
    """
    v = _as_values(values)
    if v.size < 2:
        raise ValueError("need at least two values")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    if resamples < 100:
        raise ValueError("resamples must be >= 100")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xB007]))
    mean = float(np.mean(v))
    if strata is None:
        groups = [np.sort(v)]
    else:
        s = np.asarray(strata).reshape(-1)
        if s.shape != v.shape:
            raise ValueError("strata must align with values")
        groups = [np.sort(v[s == key]) for key in sorted(set(s.tolist()))]
    sums = np.zeros(resamples)
    for g in groups:
        idx = rng.integers(0, g.size, size=(resamples, g.size))
        sums += g[idx].sum(axis=1)
    means = sums / v.size
    tail = 100 * (1 - level) / 2
    low, high = np.percentile(means, [tail, 100 - tail])
    return float(min(low, mean)), float(max(high, mean))


def _keyed(x) -> dict:
    if isinstance(x, dict):
        return {k: float(v) for k, v in x.items()}
    return {i: float(v) for i, v in enumerate(np.asarray(x, dtype=np.float64).reshape(-1))}


def paired_diff_ci(a, b, level: float = 0.95, resamples: int = 10_000, seed: int = 0) -> tuple[float, float, float]:
    """Mean of a - b over matched keys with a seed-stratified bootstrap interval.

    a and b are dicts keyed by (seed, episode) or equal-length sequences
    (aligned by position). Returns (mean_diff, low, high).
    """
    ka, kb = _keyed(a), _keyed(b)
    if not ka:
        raise ValueError("empty input")
    if set(ka) != set(kb):
        raise ValueError("a and b are not aligned on the same keys")
    keys = sorted(ka)
    d = np.array([ka[k] - kb[k] for k in keys])
    strata = [k[0] if isinstance(k, tuple) else 0 for k in keys]
    mean = float(np.mean(d))
    if np.all(d == d[0]):
        return mean, mean, mean
    low, high = bootstrap_ci(d, level, resamples, seed, strata=strata)
    return mean, low, high


def prob_improvement(a, b) -> float:
    """P(X > Y) + P(X = Y) / 2 over all pairs of a x b."""
    x, y = _as_values(a), _as_values(b)
    diff = x[:, None] - y[None, :]
    return float(np.mean((diff > 0) + 0.5 * (diff == 0)))


@dataclass(frozen=True)
class CellSummary:
    method_id: str
    env_id: str
    goal_id: str
    returns: tuple
    mean: float
    ci_low: float
    ci_high: float
    n_seeds: int

    def __post_init__(self):
        if not self.ci_low <= self.mean <= self.ci_high:
            raise ValueError("interval must contain the mean")


def summarize_cell(method_id: str, env_id: str, goal_id: str, returns, seeds, level=0.95, resamples=10_000, seed=0) -> CellSummary:
    r = _as_values(returns)
    s = np.asarray(seeds).reshape(-1)
    mean = float(np.mean(r))
    if r.size < 2:
        low = high = mean
    else:
        low, high = bootstrap_ci(r, level, resamples, seed, strata=s)
    return CellSummary(method_id, env_id, goal_id, tuple(float(x) for x in r), mean, low, high, int(len(set(s.tolist()))))


@dataclass(frozen=True)
class Verdict:
    label: str
    best_gap: float
    half_width: float


def classify_cell(frozen: CellSummary, composition_best_mean: float) -> Verdict:
    """Help / Frozen / Hurt against the frozen actor's larger one-sided half-width."""
    if not frozen.ci_low <= frozen.mean <= frozen.ci_high:
        raise ValueError("frozen summary has an invalid interval")
    eps = max(frozen.ci_high - frozen.mean, frozen.mean - frozen.ci_low)
    gap = float(composition_best_mean - frozen.mean)
    if gap > eps:
        label = "Help"
    elif -gap > eps:
        label = "Hurt"
    else:
        label = "Frozen"
    return Verdict(label, gap, float(eps))
