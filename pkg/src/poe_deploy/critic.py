"""Goal-conditioned linear critic: fitted-Q evaluation, AWR step, risk rates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .env import observation
from .gaussian import DiagGaussian

FEATURE_SPECS = ("goal_x_poly2",)
DEFAULT_GOALS = np.array([[1.0, 0.1, 0.1], [0.5, 0.5, 0.5], [0.1, 1.0, 0.1]])


def poly2(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    iu, ju = np.triu_indices(z.shape[-1])
    ones = np.ones(z.shape[:-1] + (1,))
    return np.concatenate([ones, z, z[..., iu] * z[..., ju]], axis=-1)


def poly2_grad(z: np.ndarray) -> np.ndarray:
    """d poly2(z) / dz with shape (..., n_features, dim(z))."""
    z = np.asarray(z, dtype=np.float64)
    m = z.shape[-1]
    iu, ju = np.triu_indices(m)
    n_quad = iu.size
    out = np.zeros(z.shape[:-1] + (1 + m + n_quad, m))
    out[..., 1 : 1 + m, :] = np.eye(m)
    rows = 1 + m + np.arange(n_quad)
    out[..., rows, iu] += z[..., ju]
    out[..., rows, ju] += z[..., iu]
    return out


def goal_features(psi: np.ndarray, goals: np.ndarray) -> np.ndarray:
    """Outer product g (x) psi flattened; Q is then linear in the goal."""
    return (goals[..., :, None] * psi[..., None, :]).reshape(psi.shape[:-1] + (-1,))


@dataclass(frozen=True)
class LinearCritic:
    weights: np.ndarray
    state_dim: int
    action_dim: int
    feature_spec: str = "goal_x_poly2"
    history: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if self.feature_spec not in FEATURE_SPECS:
            raise ValueError(f"unknown feature spec {self.feature_spec!r}")
        expected = 3 * poly2(np.zeros(self.state_dim - 1 + self.action_dim)).size
        if np.asarray(self.weights).shape != (expected,):
            raise ValueError(f"weights must have shape ({expected},) for {self.feature_spec}")

    @classmethod
    def zeros(cls, state_dim: int, action_dim: int) -> "LinearCritic":
        n = 3 * poly2(np.zeros(state_dim - 1 + action_dim)).size
        return cls(np.zeros(n), state_dim, action_dim)

    def _w(self) -> np.ndarray:
        return self.weights.reshape(3, -1)

    def q(self, states, actions, goal) -> np.ndarray:
        z = np.concatenate([observation(np.atleast_2d(states)), np.atleast_2d(actions)], axis=-1)
        per_component = np.sum(poly2(z)[:, None, :] * self._w()[None], axis=-1)  # (n, 3)
        return np.sum(per_component * np.asarray(goal, dtype=np.float64), axis=-1)

    def action_grad(self, states, actions, goal) -> np.ndarray:
        """Analytic dQ/da, shape (n, action_dim)."""
        z = np.concatenate([observation(np.atleast_2d(states)), np.atleast_2d(actions)], axis=-1)
        coeff = np.asarray(goal, dtype=np.float64) @ self._w()  # (n_features,)
        jac = poly2_grad(z)  # (n, F, m)
        grad = np.sum(jac * coeff[None, :, None], axis=1)
        return grad[:, -self.action_dim :]


def sample_goals(rng: np.random.Generator, n: int, spec: str = "mixture") -> np.ndarray:
    """Training goals: 50% Dir(1,1,1), 30% Dir(.5,.5,.5), 20% uniform over G1-G3."""
    if spec == "fixed":
        return DEFAULT_GOALS[rng.integers(0, 3, size=n)]
    if spec != "mixture":
        raise ValueError(f"unknown goal sampler {spec!r}")
    u = rng.uniform(size=n)
    out = np.empty((n, 3))
    a = u < 0.5
    b = (u >= 0.5) & (u < 0.8)
    c = u >= 0.8
    out[a] = rng.dirichlet(np.ones(3), size=a.sum())
    out[b] = rng.dirichlet(np.full(3, 0.5), size=b.sum())
    out[c] = DEFAULT_GOALS[rng.integers(0, 3, size=c.sum())]
    return out


def fqe_train(
    data: dict,
    actor,
    *,
    feature_spec: str = "goal_x_poly2",
    goal_sampler: str = "mixture",
    epochs: int = 200,
    gamma: float = 0.99,
    polyak_tau: float = 5e-3,
    batch_size: int = 512,
    ridge: float = 1e-6,
    seed: int = 0,
) -> LinearCritic:
    """Fitted-Q evaluation of `actor` with one-step TD targets.

    Each epoch shuffles the data into batches and draws one goal per batch.
    Targets are r_g + gamma (1 - done) Q_target(s', mean_actor(s'), g); the
    main weights are the ridge least-squares fit to the epoch's targets, and
    the target weights track them by Polyak averaging with factor tau.
    """
    states = np.asarray(data["state"], dtype=np.float64)
    n = states.shape[0]
    if n == 0:
        raise ValueError("empty dataset")
    s_dim = states.shape[1]
    a_dim = np.asarray(data["action"]).shape[1]
    psi = poly2(np.concatenate([observation(states), data["action"]], axis=1))
    next_actions = actor(data["next_state"]).mean
    psi_next = poly2(np.concatenate([observation(data["next_state"]), next_actions], axis=1))
    rc = np.asarray(data["rc"], dtype=np.float64)
    cont = gamma * (1.0 - np.asarray(data["done"], dtype=np.float64))

    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xF0E]))
    n_feat = 3 * psi.shape[1]
    w = np.zeros(n_feat)
    w_target = np.zeros(n_feat)
    n_batches = max(1, int(np.ceil(n / batch_size)))
    history = []
    for _ in range(epochs):
        order = rng.permutation(n)
        batch_goals = sample_goals(rng, n_batches, goal_sampler)
        goals = np.empty((n, 3))
        goals[order] = np.repeat(batch_goals, batch_size, axis=0)[:n]
        X = goal_features(psi, goals)
        y = np.sum(goals * rc, axis=1) + cont * (goal_features(psi_next, goals) @ w_target)
        w = np.linalg.solve(X.T @ X + ridge * np.eye(n_feat), X.T @ y)
        w_target = (1 - polyak_tau) * w_target + polyak_tau * w
        # TD error of the tracked (target) critic on this epoch's goals
        td = X @ w_target - (np.sum(goals * rc, axis=1) + cont * (goal_features(psi_next, goals) @ w_target))
        history.append(float(np.sqrt(np.mean(td**2))))
    return LinearCritic(w_target.copy(), s_dim, a_dim, feature_spec, tuple(history))


def awr_step(actor_at_state: DiagGaussian, critic: LinearCritic, state, goal, beta: float, clip: float = 1.0) -> np.ndarray:
    """First-order advantage-weighted mean shift: mu + clip(var / beta * dQ/da)."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    if not clip > 0:
        raise ValueError("clip must be positive")
    mean = np.atleast_2d(actor_at_state.mean)
    var = np.atleast_2d(actor_at_state.var)
    grad = critic.action_grad(np.atleast_2d(state), mean, goal)
    if not np.all(np.isfinite(grad)):
        raise ValueError("non-finite critic gradient")
    shift = np.clip(var / beta * grad, -clip, clip)
    out = mean + shift
    return out[0] if np.ndim(actor_at_state.mean) == 1 else out


@dataclass(frozen=True)
class RiskRates:
    cat_pct: float
    con_pct: float
    rob: float
    tau_cat: float
    tau_con: float
    mean_q: float


def robustness_score(cat_pct: float, con_pct: float) -> float:
    return 1.0 - cat_pct - 0.5 * con_pct


def quantile_risk(policy, critic: LinearCritic, data: dict, goal, percentiles=(10, 5)) -> RiskRates:
    """Fractions of policy actions scored below low quantiles of dataset-action Q.

    `policy` is either a composed rule (anything with .act) evaluated at the
    dataset states, or an array of actions aligned with them. Rates are
    fractions in [0, 1]; con_pct <= cat_pct whenever the second percentile
    is the lower one.
    """
    states = np.asarray(data["state"])
    if states.shape[0] == 0:
        raise ValueError("empty dataset")
    policy_actions = policy.act(states)[0] if hasattr(policy, "act") else np.asarray(policy)
    q_data = critic.q(states, data["action"], goal)
    tau_cat, tau_con = np.percentile(q_data, percentiles)
    q_pi = critic.q(states, policy_actions, goal)
    cat = float(np.mean(q_pi < tau_cat))
    con = float(np.mean(q_pi < tau_con))
    return RiskRates(cat, con, robustness_score(cat, con), float(tau_cat), float(tau_con), float(np.mean(q_pi)))
