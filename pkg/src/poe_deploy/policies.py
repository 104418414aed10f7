"""State-conditional diagonal-Gaussian policies: behavior, frozen actor, priors.

A policy maps a batch of states (n, 2d) to a DiagGaussian with mean and
variance of shape (n, d). Means are linear in a fixed feature map of the
observation (the state minus its forward position); log standard
deviations are state independent.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache
from itertools import combinations_with_replacement

import numpy as np
from scipy.linalg import solve_discrete_are
from scipy.optimize import minimize

from .env import EnvConfig, Goal, observation
from .gaussian import DiagGaussian

PRIOR_KINDS = ("trained", "undertrained", "noisy", "random")


def state_features(states: np.ndarray, kind: str) -> np.ndarray:
    """Monomial features of the observation: "linear" or "polyK" (all monomials up to degree K)."""
    z = observation(states)
    if kind == "linear":
        degree = 1
    elif kind.startswith("poly") and kind[4:].isdigit() and int(kind[4:]) >= 1:
        degree = int(kind[4:])
    else:
        raise ValueError(f"unknown feature map {kind!r}")
    cols = [np.ones(z.shape[:-1])]
    for k in range(1, degree + 1):
        for idx in combinations_with_replacement(range(z.shape[-1]), k):
            cols.append(np.prod(z[..., list(idx)], axis=-1))
    return np.stack(cols, axis=-1)


def n_state_features(state_dim: int, kind: str) -> int:
    return state_features(np.zeros(state_dim), kind).shape[-1]


@dataclass(frozen=True)
class LinearGaussianPolicy:
    weights: np.ndarray  # (d, n_features)
    log_std: np.ndarray  # (d,)
    features: str = "linear"

    @property
    def action_dim(self) -> int:
        return self.weights.shape[0]

    def __call__(self, states) -> DiagGaussian:
        phi = state_features(np.atleast_2d(states), self.features)
        # explicit broadcast-sum keeps each row's arithmetic independent of batch size
        mean = np.sum(phi[:, None, :] * self.weights[None, :, :], axis=-1)
        var = np.broadcast_to(np.exp(2 * self.log_std), mean.shape).copy()
        return DiagGaussian(mean, var)

    def params(self) -> np.ndarray:
        return np.concatenate([self.weights.ravel(), self.log_std])

    def with_params(self, flat: np.ndarray) -> "LinearGaussianPolicy":
        k = self.weights.size
        return replace(self, weights=flat[:k].reshape(self.weights.shape).copy(), log_std=flat[k:].copy())


def _controller(config: EnvConfig, features: str, feedforward: float, k_v: float, k_p: float, k_d: float, std: float, target_speed: float = 0.0) -> LinearGaussianPolicy:
    """Affine feedback: a_0 = feedforward + k_v (target_speed - v_0); lateral PD."""
    d = config.action_dim
    n_feat = n_state_features(2 * d, features)
    W = np.zeros((d, n_feat))
    # feature layout: [1, pos_1..pos_{d-1}, vel_0..vel_{d-1}, ...]
    W[0, 0] = feedforward + k_v * target_speed
    W[0, d] = -k_v
    for i in range(1, d):
        W[i, i] = -k_p
        W[i, d + i] = -k_d
    return LinearGaussianPolicy(W, np.full(d, np.log(std)), features)


def behavior_policy(config: EnvConfig, cruise_speed: float = 1.0, noise_std: float = 0.5) -> LinearGaussianPolicy:
    """Cruise-control behavior: P-control to cruise_speed, stiff lateral PD."""
    return _controller(
        config,
        "linear",
        feedforward=config.drag * cruise_speed,
        k_v=1.0,
        k_p=config.lateral_instability + 2.0,
        k_d=1.5,
        std=noise_std,
        target_speed=cruise_speed,
    )


def forward_return(config: EnvConfig, goal: Goal, feedforward: float, k_v: float) -> float:
    """Exact forward-axis return of a_0 = feedforward - k_v v_0 over a full episode from rest."""
    w_fwd, w_ctrl, _ = goal.weights
    rho = 1.0 - config.drag * config.dt
    v, total = 0.0, 0.0
    for _ in range(config.max_steps):
        a = min(max(feedforward - k_v * v, -config.action_limit), config.action_limit)
        v = rho * v + config.dt * a
        total += w_fwd * v - w_ctrl * a * a
    return total


def goal_forward_controller(config: EnvConfig, goal: Goal) -> tuple[float, float]:
    """Affine forward controller (feedforward, k_v) maximizing forward_return.

    With a linear reward in speed and a quadratic action cost the infinite
    horizon optimum is the constant action w_fwd / (2 w_ctrl drag); the
    finite episode prefers tapering the action as speed builds, which a
    velocity gain captures. The constant action seeds the search.
    """
    return _forward_controller(config, tuple(float(w) for w in goal.weights))


@lru_cache(maxsize=256)
def _forward_controller(config: EnvConfig, weights: tuple) -> tuple[float, float]:
    goal = Goal(weights)
    w_fwd, w_ctrl, _ = weights
    if w_ctrl > 0:
        a0 = min(max(w_fwd / (2 * w_ctrl * config.drag), 0.0), config.action_limit)
    else:
        a0 = config.action_limit if w_fwd > 0 else 0.0
    res = minimize(
        lambda x: -forward_return(config, goal, x[0], x[1]),
        x0=np.array([a0, 0.0]),
        method="Nelder-Mead",
        options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 4000},
    )
    if -res.fun < forward_return(config, goal, a0, 0.0):
        return a0, 0.0
    return float(res.x[0]), float(res.x[1])


def lateral_gains(config: EnvConfig, state_cost: float = 1e-6) -> tuple[float, float]:
    """Minimum-effort stabilizing (k_p, k_d) for the unstable lateral axis.

    Discrete LQR on the exact Euler update with a vanishing state cost.
    """
    dt, c, k = config.dt, config.drag, config.lateral_instability
    # [p', v'] = A [p, v] + B a with the semi-implicit step used by dynamics()
    A = np.array([[1 + dt * dt * k, dt * (1 - dt * c)], [dt * k, 1 - dt * c]])
    B = np.array([[dt * dt], [dt]])
    P = solve_discrete_are(A, B, state_cost * np.eye(2), np.eye(1))
    K = np.linalg.solve(np.eye(1) + B.T @ P @ B, B.T @ P @ A)
    return float(K[0, 0]), float(K[0, 1])


def fit_actor(config: EnvConfig, data: dict, min_var: float = 1e-4) -> LinearGaussianPolicy:
    """Behavior cloning: least-squares linear mean, residual variance per dimension."""
    phi = state_features(data["state"], "linear")
    W, *_ = np.linalg.lstsq(phi, data["action"], rcond=None)
    resid = data["action"] - phi @ W
    var = np.maximum(np.mean(resid**2, axis=0), min_var)
    return LinearGaussianPolicy(W.T.copy(), 0.5 * np.log(var), "linear")


@dataclass(frozen=True)
class PriorSettings:
    trained_std: float = 0.15
    random_weight_scale: float = 0.1
    random_std: float = 2.0
    features: str = "poly4"
    lateral_state_cost: float = 1.0


def make_prior(kind: str, goal: Goal, seed: int, config: EnvConfig, sigma: float = 0.05, settings: PriorSettings = PriorSettings()) -> LinearGaussianPolicy:
    """Goal-conditioned deployment prior of the requested quality.

    trained: return-optimal affine forward controller plus minimum-effort
    lateral stabilizer, small std.
    random: seeded random linear controller (bias and linear terms), large std.
    undertrained: parameter-space midpoint of trained and random.
    noisy: trained plus N(0, sigma^2) on every parameter.
    """
    if kind not in PRIOR_KINDS:
        raise ValueError(f"unknown prior kind {kind!r}; expected one of {PRIOR_KINDS}")
    k_p, k_d = lateral_gains(config, settings.lateral_state_cost)
    feedforward, k_v = goal_forward_controller(config, goal)
    trained = _controller(
        config,
        settings.features,
        feedforward=feedforward,
        k_v=k_v,
        k_p=k_p,
        k_d=k_d,
        std=settings.trained_std,
    )
    if kind == "trained":
        return trained
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), PRIOR_KINDS.index(kind), 0x5EED]))
    if kind == "noisy":
        if not sigma > 0:
            raise ValueError("noisy prior requires sigma > 0")
        theta = trained.params()
        return trained.with_params(theta + sigma * rng.standard_normal(theta.shape))
    random = _random_prior(trained, seed, settings)
    if kind == "random":
        return random
    return trained.with_params(0.5 * trained.params() + 0.5 * random.params())


def _random_prior(template: LinearGaussianPolicy, seed: int, settings: PriorSettings) -> LinearGaussianPolicy:
    # keyed on seed alone so undertrained and random share the same draw
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xA11]))
    W = np.zeros(template.weights.shape)
    n_lin = 2 * template.action_dim  # bias and linear observation terms only
    W[:, :n_lin] = settings.random_weight_scale * rng.standard_normal((template.action_dim, n_lin))
    log_std = np.full(template.action_dim, np.log(settings.random_std))
    return replace(template, weights=W, log_std=log_std)
