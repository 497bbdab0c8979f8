"""Exhaustive check of the contextual objective's attraction/repulsion decomposition.

On a finite trajectory space the expectation form

    lambda1 * sum P*(t) ||z - I(t)||  -  lambda2 * sum P^(t) ||z - I(t)||

equals the sum of two terms: trajectories where lambda1 P* >= lambda2 P^
(an attracting term, >= 0) and those where lambda1 P* < lambda2 P^ (a
repelling term, <= 0).  Ties go to the first term and contribute zero.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import ContractError

MAX_TRAJECTORIES = 10 ** 6
TOLERANCE = 1e-9


@dataclass(frozen=True)
class DiscreteTrajectorySpace:
    n_states: int
    n_actions: int
    horizon: int

    def __post_init__(self):
        if min(self.n_states, self.n_actions, self.horizon) < 1:
            raise ContractError("state count, action count and horizon must be >= 1")
        if self.size > MAX_TRAJECTORIES:
            raise ContractError(f"{self.size} trajectories exceeds the enumeration cap of {MAX_TRAJECTORIES}")

    @property
    def size(self) -> int:
        return (self.n_states * self.n_actions) ** self.horizon

    def enumerate(self) -> list:
        """Every trajectory as a tuple of (state, action) pairs, in lexicographic order."""
        steps = list(itertools.product(range(self.n_states), range(self.n_actions)))
        return list(itertools.product(steps, repeat=self.horizon))


@dataclass
class DensityPair:
    p_star: np.ndarray
    p_hat: np.ndarray

    def __post_init__(self):
        self.p_star = np.asarray(self.p_star, dtype=np.float64)
        self.p_hat = np.asarray(self.p_hat, dtype=np.float64)
        for name, p in (("P*", self.p_star), ("P^", self.p_hat)):
            if p.ndim != 1:
                raise ContractError(f"{name} must be a 1-D table")
            if (p < 0).any():
                raise ContractError(f"{name} has negative entries")
            if abs(p.sum() - 1.0) > 1e-12:
                raise ContractError(f"{name} sums to {p.sum()!r}, not 1")
        if self.p_star.shape != self.p_hat.shape:
            raise ContractError("P* and P^ tables differ in length")


def _validate(space: DiscreteTrajectorySpace, dens: DensityPair, table: np.ndarray, z: np.ndarray):
    table = np.asarray(table, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if len(dens.p_star) != space.size:
        raise ContractError(f"density tables have {len(dens.p_star)} entries, space has {space.size}")
    if table.ndim != 2 or table.shape[0] != space.size:
        raise ContractError(f"embedding table must have one row per trajectory ({space.size})")
    if z.shape != (table.shape[1],):
        raise ContractError("z dimension differs from the embedding dimension")
    return table, z


def _distances(table: np.ndarray, z: np.ndarray) -> np.ndarray:
    return np.sqrt(((z[None] - table) ** 2).sum(axis=1))


def lhs_expectation(space, dens: DensityPair, table, z, lambda1: float, lambda2: float) -> float:
    table, z = _validate(space, dens, table, z)
    d = _distances(table, z)
    return float(lambda1 * np.dot(dens.p_star, d) - lambda2 * np.dot(dens.p_hat, d))


def rhs_decomposition(space, dens: DensityPair, table, z, lambda1: float, lambda2: float) -> tuple:
    table, z = _validate(space, dens, table, z)
    d = _distances(table, z)
    w = lambda1 * dens.p_star - lambda2 * dens.p_hat
    first = w >= 0.0
    return float(np.dot(w[first], d[first])), float(np.dot(w[~first], d[~first]))


def random_instance(rng: np.random.Generator, space: DiscreteTrajectorySpace, dim: int = 2):
    """Densities from a flat Dirichlet (P^ strictly positive), embeddings and z uniform in [-1, 1]."""
    n = space.size
    p_star = rng.dirichlet(np.ones(n))
    p_hat = rng.dirichlet(np.ones(n))
    while (p_hat <= 0).any():
        p_hat = rng.dirichlet(np.ones(n))
    # renormalise so the sum is 1 to the last bit the validator cares about
    dens = DensityPair(p_star / p_star.sum(), p_hat / p_hat.sum())
    table = rng.uniform(-1.0, 1.0, size=(n, dim))
    z = rng.uniform(-1.0, 1.0, size=dim)
    lam1, lam2 = rng.uniform(0.0, 2.0, size=2)
    return dens, table, z, float(lam1), float(lam2)


def check_theorem(instances: int, seed: int, n_states: int = 2, n_actions: int = 2, horizon: int = 2,
                  dim: int = 2) -> dict:
    if instances < 1:
        raise ContractError("instances must be >= 1")
    space = DiscreteTrajectorySpace(n_states, n_actions, horizon)
    rng = np.random.default_rng([seed, 51])
    worst, signs_ok = 0.0, True
    for _ in range(instances):
        dens, table, z, l1, l2 = random_instance(rng, space, dim)
        lhs = lhs_expectation(space, dens, table, z, l1, l2)
        t1, t2 = rhs_decomposition(space, dens, table, z, l1, l2)
        worst = max(worst, abs(lhs - (t1 + t2)))
        signs_ok = signs_ok and t1 >= 0.0 and t2 <= 0.0
    return {"instances": instances, "max_abs_error": worst, "sign_structure": bool(signs_ok),
            "pass": bool(worst <= TOLERANCE and signs_ok), "seed": seed,
            "space": {"states": n_states, "actions": n_actions, "horizon": horizon, "embedding_dim": dim}}


def grid_minimizer(space, dens: DensityPair, table, lambda1: float, lambda2: float, points: int = 201) -> np.ndarray:
    """The z on a regular grid over [-1, 1]^2 with the smallest lhs value."""
    table = np.asarray(table, dtype=np.float64)
    if table.shape[1] != 2:
        raise ContractError("grid search is only defined for 2-D embeddings")
    axis = np.linspace(-1.0, 1.0, points)
    gx, gy = np.meshgrid(axis, axis, indexing="ij")
    grid = np.stack([gx.ravel(), gy.ravel()], axis=1)
    d = np.sqrt(((grid[:, None, :] - table[None]) ** 2).sum(axis=2))
    vals = lambda1 * d @ dens.p_star - lambda2 * d @ dens.p_hat
    return grid[int(np.argmin(vals))]
