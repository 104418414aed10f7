"""Closed-form diagonal-Gaussian composition rules and divergences.

All rules work in precision space. Arrays may carry leading batch axes;
the last axis is the action dimension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr


@dataclass(frozen=True)
class DiagGaussian:
    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        var = np.asarray(self.var, dtype=np.float64)
        if mean.ndim == 0:
            mean = mean.reshape(1)
        if var.ndim == 0:
            var = var.reshape(1)
        if mean.shape != var.shape:
            raise ValueError(f"mean shape {mean.shape} != var shape {var.shape}")
        if mean.shape[-1] == 0:
            raise ValueError("empty action dimension")
        if not np.all(var > 0):
            raise ValueError("variances must be strictly positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "var", var)

    @property
    def dim(self) -> int:
        return self.mean.shape[-1]

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.var)

    @property
    def precision(self) -> np.ndarray:
        return 1.0 / self.var

    def logpdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        z = (x - self.mean) ** 2 / self.var
        return -0.5 * np.sum(z + np.log(2 * np.pi * self.var), axis=-1)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.mean + self.std * rng.standard_normal((n,) + self.mean.shape)


@dataclass(frozen=True)
class EquivalenceRecord:
    alpha: float
    beta: float
    max_mean_abs_diff: float
    variance_identity_residual: float


def _check_pair(a: DiagGaussian, b: DiagGaussian):
    if a.mean.shape != b.mean.shape:
        raise ValueError(f"dimension mismatch: {a.mean.shape} vs {b.mean.shape}")


def _precision_blend(actor: DiagGaussian, prior: DiagGaussian, lam_a, lam_p) -> DiagGaussian:
    var = 1.0 / (lam_a + lam_p)
    # shift form: equal input means come back unchanged, bit for bit
    mean = actor.mean + (lam_p * var) * (prior.mean - actor.mean)
    return DiagGaussian(mean, var)


def poe_compose(actor: DiagGaussian, prior: DiagGaussian, alpha: float) -> DiagGaussian:
    """Weighted product actor^alpha * prior^(1-alpha), renormalized."""
    _check_pair(actor, prior)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if alpha == 1.0:
        return DiagGaussian(actor.mean.copy(), actor.var.copy())
    if alpha == 0.0:
        return DiagGaussian(prior.mean.copy(), prior.var.copy())
    return _precision_blend(actor, prior, alpha / actor.var, (1.0 - alpha) / prior.var)


def klreg_compose(actor: DiagGaussian, prior: DiagGaussian, beta: float) -> DiagGaussian:
    """KL-regularized refinement with precision beta / actor.var + 1 / prior.var.

    The mean is the minimizer of E_pi[-log prior] + beta * KL(pi || actor);
    the precision is that objective's curvature in the mean.
    """
    _check_pair(actor, prior)
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    return _precision_blend(actor, prior, beta / actor.var, 1.0 / prior.var)


def alpha_to_beta(alpha: float) -> float:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie strictly inside (0, 1), got {alpha}")
    return alpha / (1.0 - alpha)


def beta_to_alpha(beta: float) -> float:
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    return beta / (1.0 + beta)


def equivalence_audit(actor: DiagGaussian, prior: DiagGaussian, alpha: float) -> EquivalenceRecord:
    beta = alpha_to_beta(alpha)
    poe = poe_compose(actor, prior, alpha)
    kl = klreg_compose(actor, prior, beta)
    mean_diff = float(np.max(np.abs(poe.mean - kl.mean)))
    resid = float(np.max(np.abs(poe.var - (1.0 + beta) * kl.var) / poe.var))
    return EquivalenceRecord(alpha, beta, mean_diff, resid)


def additive_mix(actor: DiagGaussian, prior: DiagGaussian, lam: float) -> DiagGaussian:
    """Interpolate means and standard deviations (not variances)."""
    _check_pair(actor, prior)
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    if lam == 0.0:
        return DiagGaussian(actor.mean.copy(), actor.var.copy())
    if lam == 1.0:
        return DiagGaussian(prior.mean.copy(), prior.var.copy())
    mean = (1.0 - lam) * actor.mean + lam * prior.mean
    std = (1.0 - lam) * actor.std + lam * prior.std
    return DiagGaussian(mean, std**2)


def gaussian_kl(p: DiagGaussian, q: DiagGaussian) -> np.ndarray:
    """KL(p || q) in nats, summed over the action axis."""
    _check_pair(p, q)
    ratio = p.var / q.var
    terms = ratio - 1.0 - np.log(ratio) + (p.mean - q.mean) ** 2 / q.var
    out = 0.5 * np.sum(terms, axis=-1)
    # rounding can push an exact zero slightly negative
    return np.maximum(out, 0.0)


def gaussian_w2(p: DiagGaussian, q: DiagGaussian) -> np.ndarray:
    _check_pair(p, q)
    sq = np.sum((p.mean - q.mean) ** 2 + (p.std - q.std) ** 2, axis=-1)
    return np.sqrt(sq)


def pinsker_tv_bound(kl) -> np.ndarray | float:
    kl_arr = np.asarray(kl, dtype=np.float64)
    if np.any(kl_arr < 0):
        raise ValueError("KL must be non-negative")
    out = np.minimum(1.0, np.sqrt(0.5 * kl_arr))
    return float(out) if out.ndim == 0 else out


def mc_tv_estimate(p: DiagGaussian, q: DiagGaussian, n_samples: int, seed: int) -> float:
    """Monte Carlo TV(p, q) for single (unbatched) Gaussians.

    Draws x from the mixture m = (p + q) / 2 and averages
    |p(x) - q(x)| / (p(x) + q(x)). Since TV = E_m[|p - q| / (p + q)], the
    estimator is unbiased and every term lies in [0, 1]. Half the samples
    come from each component (stratified mixture sampling).
    """
    _check_pair(p, q)
    if p.mean.ndim != 1:
        raise ValueError("mc_tv_estimate expects unbatched Gaussians")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    n_p = (n_samples + 1) // 2
    x = np.concatenate([p.sample(rng, n_p), q.sample(rng, n_samples - n_p)], axis=0)
    lp = p.logpdf(x)
    lq = q.logpdf(x)
    # |p-q|/(p+q) = |tanh((lp-lq)/2)|, stable for far tails
    ratio = np.abs(np.tanh(0.5 * (lp - lq)))
    return float(np.mean(ratio))


def tv_1d_exact(p: DiagGaussian, q: DiagGaussian) -> float:
    """Exact TV for two 1-d Gaussians (oracle for the MC estimator)."""
    if p.dim != 1 or q.dim != 1 or p.mean.ndim != 1:
        raise ValueError("tv_1d_exact handles scalar Gaussians only")
    m1, m2 = float(p.mean[0]), float(q.mean[0])
    s1, s2 = math.sqrt(p.var[0]), math.sqrt(q.var[0])
    if math.isclose(s1, s2, rel_tol=1e-14):
        return float(2 * ndtr(abs(m1 - m2) / (2 * s1)) - 1)
    # density crossings solve a quadratic in x
    a = 1 / (2 * s2**2) - 1 / (2 * s1**2)
    b = m1 / s1**2 - m2 / s2**2
    c = m2**2 / (2 * s2**2) - m1**2 / (2 * s1**2) + math.log(s2 / s1)
    disc = math.sqrt(max(b * b - 4 * a * c, 0.0))
    x1, x2 = sorted([(-b - disc) / (2 * a), (-b + disc) / (2 * a)])

    def cdf(x, m, s):
        return float(ndtr((x - m) / s))

    # p - q keeps one sign between the crossings and the opposite sign
    # outside, so TV is the absolute mass difference on [x1, x2]
    inner = (cdf(x2, m1, s1) - cdf(x1, m1, s1)) - (cdf(x2, m2, s2) - cdf(x1, m2, s2))
    return abs(inner)
