import itertools
import math

import numpy as np
import pytest

from stitchformer.errors import ContractError
from stitchformer.theorem import (DensityPair, DiscreteTrajectorySpace, check_theorem, grid_minimizer,
                                  lhs_expectation, random_instance, rhs_decomposition)


def loop_lhs(p_star, p_hat, table, z, l1, l2):
    """Second, independently written summation: explicit loops, math.hypot distances."""
    total = 0.0
    for ps, ph, emb in zip(p_star, p_hat, table):
        d = math.sqrt(sum((zi - ei) ** 2 for zi, ei in zip(z, emb)))
        total += l1 * ps * d
        total -= l2 * ph * d
    return total


def test_enumeration_complete_and_unique():
    space = DiscreteTrajectorySpace(2, 2, 2)
    trajs = space.enumerate()
    assert len(trajs) == space.size == 16
    assert len(set(trajs)) == 16
    assert trajs == sorted(trajs)
    assert set(trajs) == set(itertools.product(itertools.product(range(2), range(2)), repeat=2))


def test_enumeration_cap():
    with pytest.raises(ContractError):
        DiscreteTrajectorySpace(10, 10, 4)  # 10^8 trajectories


def test_density_validation():
    with pytest.raises(ContractError):
        DensityPair([0.5, 0.6], [0.5, 0.5])
    with pytest.raises(ContractError):
        DensityPair([1.5, -0.5], [0.5, 0.5])
    with pytest.raises(ContractError):
        DensityPair([1.0], [0.5, 0.5])


def test_length_mismatch_is_contract_error():
    space = DiscreteTrajectorySpace(2, 2, 1)
    dens = DensityPair(np.full(4, 0.25), np.full(4, 0.25))
    with pytest.raises(ContractError):
        lhs_expectation(space, dens, np.zeros((3, 2)), np.zeros(2), 1.0, 1.0)
    bad = DensityPair(np.full(2, 0.5), np.full(2, 0.5))
    with pytest.raises(ContractError):
        rhs_decomposition(space, bad, np.zeros((4, 2)), np.zeros(2), 1.0, 1.0)


def _instance(seed):
    space = DiscreteTrajectorySpace(2, 2, 2)
    return (space,) + random_instance(np.random.default_rng(seed), space)


def test_identical_distributions_cancel():
    space, dens, table, z, _, _ = _instance(0)
    same = DensityPair(dens.p_star, dens.p_star)
    assert abs(lhs_expectation(space, same, table, z, 0.8, 0.8)) < 1e-15


def test_zero_distances_give_zero():
    space, dens, _, z, l1, _ = _instance(1)
    table = np.tile(z, (space.size, 1))
    assert lhs_expectation(space, dens, table, z, l1, 0.0) == 0.0


def test_lhs_matches_loop_implementation():
    for seed in range(50):
        space, dens, table, z, l1, l2 = _instance(seed)
        ref = loop_lhs(dens.p_star, dens.p_hat, table, z, l1, l2)
        assert abs(lhs_expectation(space, dens, table, z, l1, l2) - ref) <= 1e-12


def test_term2_empty_when_attraction_dominates():
    space, dens, table, z, _, _ = _instance(2)
    l1 = 1.0
    l2 = float((dens.p_star / dens.p_hat).min())  # l1 P* >= l2 P^ everywhere
    t1, t2 = rhs_decomposition(space, dens, table, z, l1, l2)
    assert t2 == 0.0
    assert t1 >= 0.0


def test_zero_lambda1():
    space, dens, table, z, _, l2 = _instance(3)
    t1, t2 = rhs_decomposition(space, dens, table, z, 0.0, l2)
    d = np.sqrt(((table - z) ** 2).sum(1))
    assert t1 == 0.0
    assert t2 == pytest.approx(-l2 * np.dot(dens.p_hat, d), abs=1e-14)


def test_ties_go_to_first_term_only():
    space = DiscreteTrajectorySpace(1, 2, 1)
    dens = DensityPair([0.5, 0.5], [0.5, 0.5])
    table = np.array([[0.3, 0.0], [0.0, 0.4]])
    t1, t2 = rhs_decomposition(space, dens, table, np.zeros(2), 1.0, 1.0)
    assert (t1, t2) == (0.0, 0.0)


def test_theorem_equality_and_signs_random_instances():
    for seed in range(200):
        space, dens, table, z, l1, l2 = _instance(seed)
        lhs = lhs_expectation(space, dens, table, z, l1, l2)
        t1, t2 = rhs_decomposition(space, dens, table, z, l1, l2)
        assert abs(lhs - (t1 + t2)) <= 1e-9
        assert t1 >= 0.0 >= t2


def test_check_theorem_report():
    rep = check_theorem(100, seed=7)
    assert rep["pass"] and rep["sign_structure"]
    assert rep["max_abs_error"] <= 1e-9
    assert rep == check_theorem(100, seed=7)
    with pytest.raises(ContractError):
        check_theorem(0, seed=1)


def test_grid_minimizer_concentrated_expert():
    space = DiscreteTrajectorySpace(2, 2, 1)
    p_star = np.array([0.0, 1.0, 0.0, 0.0])
    dens = DensityPair(p_star, np.full(4, 0.25))
    table = np.array([[-0.5, -0.5], [0.3, 0.6], [0.9, -0.2], [-0.8, 0.7]])
    zmin = grid_minimizer(space, dens, table, 1.0, 0.0, points=201)
    assert np.allclose(zmin, table[1], atol=1e-12)


def test_attraction_repulsion_semantics():
    """Minimiser over z sits closer to the attracting trajectory than to the repelling one."""
    space = DiscreteTrajectorySpace(1, 2, 1)
    dens = DensityPair([0.8, 0.2], [0.3, 0.7])  # tau_a: 0.8 > 0.3, tau_b: 0.2 < 0.7
    table = np.array([[0.2, 0.1], [-0.4, -0.3]])
    zmin = grid_minimizer(space, dens, table, 1.0, 1.0)
    assert np.linalg.norm(zmin - table[0]) < np.linalg.norm(zmin - table[1])
