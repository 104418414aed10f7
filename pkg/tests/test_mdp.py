import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from poe_deploy.mdp import (
    TabularMdp,
    TabularPolicy,
    bellman_residual,
    cpi_diagnostic,
    deploy_improvement_check,
    discounted_occupancy,
    exact_return,
    kernel_shift_bound_check,
    occupancy_bound_check,
    occupancy_return,
    pdl_check,
    penalty_coefficient,
    perturb_kernel,
    poe_tabular,
    random_mdp,
    random_policy,
    softmax_prior,
    solve_values,
    sup_tv,
)

FWD = np.array([1.0, 0.0, 0.0])


def _rc(r):
    """Put a reward table into the forward component."""
    r = np.asarray(r, dtype=float)
    return np.stack([r, np.zeros_like(r), np.zeros_like(r)], axis=-1)


def two_state_switch(gamma=0.5):
    # action 0 stays, action 1 switches; being in state 1 pays 1
    P = np.zeros((2, 2, 2))
    P[0, 0, 0] = P[1, 0, 1] = 1.0
    P[0, 1, 1] = P[1, 1, 0] = 1.0
    return TabularMdp(P, _rc([[0.0, 0.0], [1.0, 1.0]]), gamma, np.array([1.0, 0.0]))


instance_seeds = st.integers(0, 2**32 - 1)


def instance(seed, gamma=None):
    rng = np.random.default_rng(seed)
    S, A = int(rng.integers(1, 9)), int(rng.integers(1, 5))
    g = gamma if gamma is not None else float(rng.choice([0.5, 0.9, 0.99]))
    mdp = random_mdp(rng, S, A, g)
    goal = rng.dirichlet(np.ones(3))
    return rng, mdp, random_policy(rng, S, A), random_policy(rng, S, A), goal


# -- validation ----------------------------------------------------------------


def test_mdp_validation():
    P = np.full((2, 1, 2), 0.5)
    with pytest.raises(ValueError):
        TabularMdp(P * 1.1, _rc([[0], [0]]), 0.9, np.array([0.5, 0.5]))
    with pytest.raises(ValueError):
        TabularMdp(P, _rc([[0], [0]]), 1.0, np.array([0.5, 0.5]))
    with pytest.raises(ValueError):
        TabularMdp(P, _rc([[0], [0]]), 0.9, np.array([0.7, 0.7]))
    with pytest.raises(ValueError):
        TabularMdp(P, np.zeros((2, 1, 2)), 0.9, np.array([0.5, 0.5]))
    with pytest.raises(ValueError):
        TabularPolicy(np.array([[0.5, 0.6]]))


def test_policy_shape_mismatch():
    mdp = two_state_switch()
    with pytest.raises(ValueError):
        solve_values(mdp, TabularPolicy(np.ones((3, 2)) / 2), FWD)


# -- worked values ---------------------------------------------------------------


def test_single_state_geometric_series():
    mdp = TabularMdp(np.ones((1, 1, 1)), _rc([[1.0]]), 0.9, np.array([1.0]))
    pi = TabularPolicy(np.ones((1, 1)))
    assert solve_values(mdp, pi, FWD).V[0] == pytest.approx(10.0, abs=1e-12)
    assert exact_return(mdp, pi, FWD) == pytest.approx(10.0, abs=1e-12)
    assert discounted_occupancy(mdp, pi) == pytest.approx([1.0])
    assert exact_return(mdp, pi, np.zeros(3)) == 0.0


def test_values_match_value_iteration_oracle():
    # 3000 sweeps of V <- sum_a pi (r + gamma P V) gave these values
    P = np.array([[[0.9, 0.1], [0.2, 0.8]], [[0.5, 0.5], [0.0, 1.0]]])
    mdp = TabularMdp(P, _rc([[1.0, 0.0], [0.0, 2.0]]), 0.9, np.array([0.6, 0.4]))
    pi = TabularPolicy(np.array([[0.5, 0.5], [0.25, 0.75]]))
    vb = solve_values(mdp, pi, FWD)
    assert vb.V == pytest.approx([11.55870445344129, 13.178137651821853], abs=1e-10)
    assert exact_return(mdp, pi, FWD) == pytest.approx(12.206477732793516, abs=1e-10)


def test_random_values_match_iteration():
    rng = np.random.default_rng(5)
    mdp = random_mdp(rng, 5, 3, 0.9)
    pi = random_policy(rng, 5, 3)
    g = np.array([0.3, 0.5, 0.2])
    V = np.zeros(5)
    r = mdp.reward(g)
    for _ in range(2000):
        V = np.sum(pi.probs * (r + 0.9 * mdp.transition @ V), axis=1)
    assert solve_values(mdp, pi, g).V == pytest.approx(V, abs=1e-10)


def test_cycle_occupancy_is_uniform():
    mdp = two_state_switch(0.5)
    mdp = TabularMdp(mdp.transition, mdp.components, 0.5, np.array([0.5, 0.5]))
    switch = TabularPolicy(np.array([[0.0, 1.0], [0.0, 1.0]]))
    assert discounted_occupancy(mdp, switch) == pytest.approx([0.5, 0.5], abs=1e-15)


def test_pdl_hand_worked_example():
    # stay forever earns 0; alternating from state 0 earns gamma / (1 - gamma^2) = 2/3
    mdp = two_state_switch(0.5)
    stay = TabularPolicy(np.array([[1.0, 0.0], [1.0, 0.0]]))
    switch = TabularPolicy(np.array([[0.0, 1.0], [0.0, 1.0]]))
    assert exact_return(mdp, stay, FWD) == pytest.approx(0.0, abs=1e-15)
    assert exact_return(mdp, switch, FWD) == pytest.approx(2 / 3, abs=1e-15)
    # advantages of "stay": A(0, switch) = 1, A(1, switch) = -1; d^switch = (2/3, 1/3)
    A = solve_values(mdp, stay, FWD).A
    assert A[:, 1] == pytest.approx([1.0, -1.0])
    assert discounted_occupancy(mdp, switch) == pytest.approx([2 / 3, 1 / 3])
    assert pdl_check(mdp, stay, switch, FWD) < 1e-15


def test_occupancy_bound_coefficient():
    # gamma 0.9, delta 0.1: coefficient 2 * 0.9 / 0.1 = 18, so the bound is 1.8
    mdp = random_mdp(np.random.default_rng(0), 3, 2, 0.9)
    pi = TabularPolicy(np.array([[0.5, 0.5]] * 3))
    pi2 = TabularPolicy(np.array([[0.6, 0.4]] * 3))
    out = occupancy_bound_check(mdp, pi, pi2)
    assert out["rhs"] == pytest.approx(1.8, abs=1e-12)
    same = occupancy_bound_check(mdp, pi, pi)
    assert same["lhs"] == 0 and same["rhs"] == 0


def test_penalty_coefficients():
    assert penalty_coefficient(0.99) == 19800.0
    assert penalty_coefficient(0.9) == 180.0
    assert penalty_coefficient(0.5) == 4.0


def test_cpi_identity_refinement_is_tight():
    _, mdp, pi, _, g = instance(3)
    d = cpi_diagnostic(mdp, pi, pi, g)
    assert abs(d.lhs) < 1e-12 and abs(d.rhs) < 1e-9 and d.delta_pi == 0


def test_kernel_shift_identical_kernels():
    _, mdp, pi, _, g = instance(4)
    out = kernel_shift_bound_check(mdp, mdp, pi, g)
    assert out["eps_P"] == 0 and out["occ_gap"] == 0 and out["return_gap"] == 0


def test_kernel_shift_rejects_structural_mismatch():
    _, mdp, pi, _, g = instance(4)
    other = TabularMdp(mdp.transition, mdp.components * 2, mdp.gamma, mdp.initial_dist)
    with pytest.raises(ValueError):
        kernel_shift_bound_check(mdp, other, pi, g)


def test_softmax_prior_rows():
    q = np.array([[0.0, 1.0], [2.0, 2.0]])
    p = softmax_prior(q, 1.0)
    assert p.probs[1] == pytest.approx([0.5, 0.5])
    assert p.probs[0, 1] == pytest.approx(1 / (1 + np.exp(-1)))


# -- properties on random instances ---------------------------------------------


@given(instance_seeds)
def test_bellman_and_advantage_centering(seed):
    _, mdp, pi, _, g = instance(seed)
    vb = solve_values(mdp, pi, g)
    assert bellman_residual(mdp, pi, g, vb.V) <= 1e-8 * max(1.0, np.abs(vb.V).max())
    assert np.max(np.abs(np.sum(pi.probs * vb.A, axis=1))) <= 1e-9 * max(1.0, np.abs(vb.V).max())


@given(instance_seeds)
def test_occupancy_is_distribution_and_identity_holds(seed):
    _, mdp, pi, _, g = instance(seed)
    d = discounted_occupancy(mdp, pi)
    assert np.all(d >= 0) and d.sum() == pytest.approx(1.0, abs=1e-9)
    J = exact_return(mdp, pi, g)
    assert occupancy_return(mdp, pi, g) == pytest.approx(J, abs=1e-8 * max(1.0, abs(J)))


@given(instance_seeds)
def test_pdl_identity(seed):
    _, mdp, pi, pi2, g = instance(seed)
    scale = max(1.0, abs(exact_return(mdp, pi, g)))
    assert pdl_check(mdp, pi, pi2, g) <= 1e-8 * scale


@given(instance_seeds)
def test_occupancy_gap_bound(seed):
    _, mdp, pi, pi2, _ = instance(seed)
    out = occupancy_bound_check(mdp, pi, pi2)
    assert out["lhs"] <= out["rhs"] + 1e-10


@given(instance_seeds, st.floats(0.05, 0.95))
def test_cpi_lower_bound_with_poe_refinement(seed, alpha):
    _, mdp, pi, _, g = instance(seed)
    prior = softmax_prior(solve_values(mdp, pi, g).Q, 0.5)
    refined = poe_tabular(pi, prior, alpha)
    d = cpi_diagnostic(mdp, pi, refined, g)
    assert d.lhs >= d.rhs - 1e-9
    assert d.penalty_coeff == penalty_coefficient(mdp.gamma)
    assert d.delta_pi == pytest.approx(sup_tv(refined, pi))
    if d.improvement_certified:
        assert d.rhs > 0
        if d.rhs > 1e-9:
            assert d.lhs > 0


@given(instance_seeds, st.floats(0.0, 0.5))
def test_kernel_shift_bounds(seed, scale):
    rng, mdp, pi, pi2, g = instance(seed)
    deploy = perturb_kernel(rng, mdp, scale)
    out = kernel_shift_bound_check(mdp, deploy, pi, g)
    assert out["occ_gap"] <= out["occ_bound"] + 1e-10
    assert out["return_gap"] <= out["return_bound"] + 1e-10
    chk = deploy_improvement_check(mdp, deploy, pi, pi2, g)
    assert chk["deploy_gain"] >= chk["bound"] - 1e-9


def test_poe_refinement_at_alpha_one_is_actor():
    _, mdp, pi, pi2, _ = instance(11)
    assert np.allclose(poe_tabular(pi, pi2, 1.0).probs, pi.probs)
