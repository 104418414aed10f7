"""Exact tabular MDP evaluation and checks of the improvement/shift bounds.

Everything is solved with direct linear solves so the identity checks are
identities up to floating point, not approximations.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .finite import FinitePolicy, poe_finite, tv_distance

STOCH_TOL = 1e-10
N_COMPONENTS = 3


@dataclass(frozen=True)
class TabularMdp:
    transition: np.ndarray  # P[s, a, s']
    components: np.ndarray  # rc[s, a, k]
    gamma: float
    initial_dist: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.transition, dtype=np.float64)
        rc = np.asarray(self.components, dtype=np.float64)
        mu = np.asarray(self.initial_dist, dtype=np.float64)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValueError(f"transition must be (S, A, S), got {P.shape}")
        if np.any(P < 0) or np.max(np.abs(P.sum(-1) - 1)) > STOCH_TOL:
            raise ValueError("transition rows must be probability vectors")
        if rc.shape != P.shape[:2] + (N_COMPONENTS,):
            raise ValueError(f"components must be (S, A, 3), got {rc.shape}")
        if mu.shape != (P.shape[0],) or np.any(mu < 0) or abs(mu.sum() - 1) > STOCH_TOL:
            raise ValueError("initial_dist must be a probability vector over states")
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "components", rc)
        object.__setattr__(self, "initial_dist", mu)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    def reward(self, goal) -> np.ndarray:
        return self.components @ np.asarray(goal, dtype=np.float64)


@dataclass(frozen=True)
class TabularPolicy:
    probs: np.ndarray  # pi[s, a]

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 2 or np.any(p < 0) or np.max(np.abs(p.sum(-1) - 1)) > STOCH_TOL:
            raise ValueError("policy rows must be probability vectors")
        object.__setattr__(self, "probs", p)

    def row(self, s: int) -> FinitePolicy:
        return FinitePolicy(self.probs[s])


@dataclass(frozen=True)
class ValueBundle:
    V: np.ndarray
    Q: np.ndarray
    A: np.ndarray


@dataclass(frozen=True)
class CpiDiagnostic:
    lhs: float
    gain_term: float
    penalty_coeff: float
    eps_A: float
    delta_pi: float
    rhs: float
    improvement_certified: bool
    rhs_unit_proxy: float


def _check(mdp: TabularMdp, policy: TabularPolicy):
    if policy.probs.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError("policy shape does not match the MDP")


def state_kernel(mdp: TabularMdp, policy: TabularPolicy) -> np.ndarray:
    return np.einsum("sa,sat->st", policy.probs, mdp.transition)


def solve_values(mdp: TabularMdp, policy: TabularPolicy, goal) -> ValueBundle:
    _check(mdp, policy)
    r = mdp.reward(goal)
    P_pi = state_kernel(mdp, policy)
    r_pi = np.sum(policy.probs * r, axis=1)
    V = np.linalg.solve(np.eye(mdp.n_states) - mdp.gamma * P_pi, r_pi)
    Q = r + mdp.gamma * mdp.transition @ V
    return ValueBundle(V, Q, Q - V[:, None])


def bellman_residual(mdp: TabularMdp, policy: TabularPolicy, goal, V) -> float:
    r_pi = np.sum(policy.probs * mdp.reward(goal), axis=1)
    return float(np.max(np.abs(r_pi + mdp.gamma * state_kernel(mdp, policy) @ V - V)))


def discounted_occupancy(mdp: TabularMdp, policy: TabularPolicy) -> np.ndarray:
    """d = (1 - gamma) mu + gamma P_pi^T d."""
    _check(mdp, policy)
    P_pi = state_kernel(mdp, policy)
    A = np.eye(mdp.n_states) - mdp.gamma * P_pi.T
    d = np.linalg.solve(A, (1 - mdp.gamma) * mdp.initial_dist)
    return np.maximum(d, 0.0)


def exact_return(mdp: TabularMdp, policy: TabularPolicy, goal) -> float:
    return float(mdp.initial_dist @ solve_values(mdp, policy, goal).V)


def occupancy_return(mdp: TabularMdp, policy: TabularPolicy, goal) -> float:
    """Return via the occupancy identity, an independent route to exact_return."""
    d = discounted_occupancy(mdp, policy)
    r_pi = np.sum(policy.probs * mdp.reward(goal), axis=1)
    return float(d @ r_pi / (1 - mdp.gamma))


def sup_tv(pi_a: TabularPolicy, pi_b: TabularPolicy) -> float:
    return max(tv_distance(pi_a.row(s), pi_b.row(s)) for s in range(pi_a.probs.shape[0]))


def pdl_check(mdp: TabularMdp, pi: TabularPolicy, pi_prime: TabularPolicy, goal) -> float:
    """|J(pi') - J(pi) - E_{d^pi'} E_{pi'}[A^pi] / (1 - gamma)|."""
    lhs = exact_return(mdp, pi_prime, goal) - exact_return(mdp, pi, goal)
    A = solve_values(mdp, pi, goal).A
    d_prime = discounted_occupancy(mdp, pi_prime)
    rhs = d_prime @ np.sum(pi_prime.probs * A, axis=1) / (1 - mdp.gamma)
    return float(abs(lhs - rhs))


def occupancy_bound_check(mdp: TabularMdp, pi: TabularPolicy, pi_prime: TabularPolicy) -> dict:
    gap = np.abs(discounted_occupancy(mdp, pi_prime) - discounted_occupancy(mdp, pi)).sum()
    coeff = 2 * mdp.gamma / (1 - mdp.gamma)
    return {"lhs": float(gap), "rhs": float(coeff * sup_tv(pi_prime, pi))}


def kernel_tv(mdp_a: TabularMdp, mdp_b: TabularMdp) -> float:
    return float(0.5 * np.abs(mdp_a.transition - mdp_b.transition).sum(-1).max())


def kernel_shift_bound_check(mdp_train: TabularMdp, mdp_deploy: TabularMdp, policy: TabularPolicy, goal) -> dict:
    if (
        mdp_train.transition.shape != mdp_deploy.transition.shape
        or mdp_train.gamma != mdp_deploy.gamma
        or not np.array_equal(mdp_train.components, mdp_deploy.components)
        or not np.array_equal(mdp_train.initial_dist, mdp_deploy.initial_dist)
    ):
        raise ValueError("MDPs must differ only in their transition kernels")
    g = mdp_train.gamma
    eps_P = kernel_tv(mdp_train, mdp_deploy)
    r_max = float(np.max(np.abs(mdp_train.reward(goal))))
    occ_gap = np.abs(discounted_occupancy(mdp_deploy, policy) - discounted_occupancy(mdp_train, policy)).sum()
    ret_gap = abs(exact_return(mdp_deploy, policy, goal) - exact_return(mdp_train, policy, goal))
    return {
        "eps_P": eps_P,
        "r_max": r_max,
        "occ_gap": float(occ_gap),
        "occ_bound": 2 * g * eps_P / (1 - g),
        "return_gap": float(ret_gap),
        "return_bound": 2 * g * r_max * eps_P / (1 - g) ** 2,
    }


def penalty_coefficient(gamma: float) -> float:
    """2 gamma / (1 - gamma)^2, evaluated on the decimal value of gamma.

    In floats 0.99 is slightly below 99/100, which puts the coefficient
    4e-11 under 19800; exact rational arithmetic removes that.
    """
    g = Fraction(repr(float(gamma)))
    return float(2 * g / (1 - g) ** 2)


def cpi_diagnostic(mdp: TabularMdp, actor: TabularPolicy, refined: TabularPolicy, goal, eps_proxy: float = 1.0) -> CpiDiagnostic:
    """Plug-in evaluation of the conservative-improvement lower bound.

    eps_A is computed exactly; rhs_unit_proxy replaces it by eps_proxy to
    mirror a unit advantage-range proxy.
    """
    g = mdp.gamma
    lhs = exact_return(mdp, refined, goal) - exact_return(mdp, actor, goal)
    A = solve_values(mdp, actor, goal).A
    abar = np.sum(refined.probs * A, axis=1)
    d = discounted_occupancy(mdp, actor)
    gain = float(d @ abar)
    eps_A = float(np.max(np.abs(abar)))
    delta = sup_tv(refined, actor)
    coeff = penalty_coefficient(g)
    rhs = gain / (1 - g) - coeff * eps_A * delta
    certified = gain > (2 * g / (1 - g)) * eps_A * delta
    rhs_proxy = gain / (1 - g) - coeff * eps_proxy * delta
    return CpiDiagnostic(float(lhs), gain, coeff, eps_A, delta, float(rhs), bool(certified), float(rhs_proxy))


def deploy_improvement_check(mdp_train: TabularMdp, mdp_deploy: TabularMdp, actor: TabularPolicy, refined: TabularPolicy, goal) -> dict:
    """Deploy-side improvement against the train-side bound minus the shift term."""
    diag = cpi_diagnostic(mdp_train, actor, refined, goal)
    shift = kernel_shift_bound_check(mdp_train, mdp_deploy, refined, goal)
    g = mdp_train.gamma
    deploy_gain = exact_return(mdp_deploy, refined, goal) - exact_return(mdp_deploy, actor, goal)
    bound = diag.rhs - 4 * g * shift["r_max"] * shift["eps_P"] / (1 - g) ** 2
    return {"deploy_gain": float(deploy_gain), "bound": float(bound)}


# ---------------------------------------------------------------------------
# random instances


def random_mdp(rng: np.random.Generator, n_states: int, n_actions: int, gamma: float) -> TabularMdp:
    """Transition rows are normalized positive draws; components uniform in [-1, 1]."""
    P = rng.exponential(size=(n_states, n_actions, n_states))
    P /= P.sum(-1, keepdims=True)
    rc = rng.uniform(-1, 1, size=(n_states, n_actions, N_COMPONENTS))
    mu = rng.exponential(size=n_states)
    return TabularMdp(P, rc, gamma, mu / mu.sum())


def random_policy(rng: np.random.Generator, n_states: int, n_actions: int) -> TabularPolicy:
    p = rng.exponential(size=(n_states, n_actions))
    return TabularPolicy(p / p.sum(-1, keepdims=True))


def perturb_kernel(rng: np.random.Generator, mdp: TabularMdp, scale: float) -> TabularMdp:
    """Mix each transition row toward a fresh random row by weight `scale`."""
    other = rng.exponential(size=mdp.transition.shape)
    other /= other.sum(-1, keepdims=True)
    P = (1 - scale) * mdp.transition + scale * other
    return TabularMdp(P / P.sum(-1, keepdims=True), mdp.components, mdp.gamma, mdp.initial_dist)


def poe_tabular(actor: TabularPolicy, prior: TabularPolicy, alpha: float) -> TabularPolicy:
    rows = [poe_finite(actor.row(s), prior.row(s), alpha).probs for s in range(actor.probs.shape[0])]
    return TabularPolicy(np.array(rows))


def softmax_prior(values: np.ndarray, temperature: float) -> TabularPolicy:
    """Goal-aware prior from action values: rows ~ exp(Q / temperature)."""
    z = values / temperature
    z = z - z.max(axis=1, keepdims=True)
    w = np.exp(z)
    return TabularPolicy(w / w.sum(axis=1, keepdims=True))
