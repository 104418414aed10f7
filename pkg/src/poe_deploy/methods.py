"""Deployment methods as deterministic per-state action rules."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .critic import awr_step
from .gaussian import DiagGaussian, additive_mix, alpha_to_beta, gaussian_kl, klreg_compose, poe_compose

METHOD_KINDS = ("frozen", "prior_only", "additive", "poe", "klreg", "awr")


@dataclass(frozen=True)
class MethodSpec:
    kind: str
    param: float | None = None
    clip: float = 1.0
    label: str | None = None  # overrides the generated method id

    def __post_init__(self):
        if self.kind not in METHOD_KINDS:
            raise ValueError(f"unknown method kind {self.kind!r}")
        if self.kind in ("additive", "poe", "klreg", "awr") and self.param is None:
            raise ValueError(f"{self.kind} requires a parameter")

    @property
    def method_id(self) -> str:
        if self.label:
            return self.label
        if self.param is None:
            return self.kind
        return f"{self.kind}_{self.param:g}"

    @property
    def family(self) -> str:
        return {"klreg": "KL-Reg", "poe": "PoE", "additive": "Additive"}.get(self.kind, self.kind)


def matched_klreg(alpha: float, label_beta: float | None = None) -> MethodSpec:
    """KL-Reg at exactly beta = alpha / (1 - alpha), labelled by the grid value."""
    beta = alpha_to_beta(alpha)
    label = f"klreg_{label_beta if label_beta is not None else round(beta, 3):.3f}"
    return MethodSpec("klreg", beta, label=label)


class ComposedRule:
    """Deterministic deployment rule: the mean of a per-state Gaussian.

    act(states) returns (actions, kl_from_actor) for a state batch; the KL is
    between the method's Gaussian and the frozen actor's Gaussian.
    """

    def __init__(self, spec: MethodSpec, actor, prior=None, critic=None, goal=None):
        if spec.kind in ("prior_only", "additive", "poe", "klreg") and prior is None:
            raise ValueError(f"{spec.kind} requires a prior")
        if spec.kind == "awr" and (critic is None or goal is None):
            raise ValueError("awr requires a critic and a goal")
        self.spec = spec
        self.actor = actor
        self.prior = prior
        self.critic = critic
        self.goal = None if goal is None else np.asarray(goal, dtype=np.float64)
        self.action_dim = actor.action_dim

    def distribution(self, states) -> DiagGaussian:
        a = self.actor(states)
        kind, x = self.spec.kind, self.spec.param
        if kind == "frozen":
            return a
        if kind == "awr":
            mean = awr_step(a, self.critic, np.atleast_2d(states), self.goal, x, self.spec.clip)
            return DiagGaussian(mean, a.var)
        p = self.prior(states)
        if kind == "prior_only":
            return p
        if kind == "additive":
            return additive_mix(a, p, x)
        if kind == "poe":
            return poe_compose(a, p, x)
        return klreg_compose(a, p, x)

    def act(self, states):
        if self.spec.kind == "frozen":
            a = self.actor(states)
            return a.mean, np.zeros(a.mean.shape[0])
        dist = self.distribution(states)
        return dist.mean, gaussian_kl(dist, self.actor(states))

    def __call__(self, states) -> np.ndarray:
        return self.act(states)[0]


def compose_method(spec: MethodSpec, actor, prior=None, critic=None, goal=None) -> ComposedRule:
    return ComposedRule(spec, actor, prior, critic, goal)
