"""Trajectories and padded window batches."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError


@dataclass
class Trajectory:
    """One episode: per-step observation, action, action-mask flag and optional reward.

    ``action_masked`` marks steps whose action is unavailable to the learner
    (learning from observations).  Masked actions are stored as zeros.
    """

    observations: np.ndarray
    actions: np.ndarray
    action_masked: np.ndarray
    rewards: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.observations = np.asarray(self.observations, dtype=np.float64)
        self.actions = np.asarray(self.actions, dtype=np.float64)
        self.action_masked = np.asarray(self.action_masked, dtype=bool)
        if self.observations.ndim != 2 or self.actions.ndim != 2:
            raise ContractError("observations and actions must be 2-D (steps x dim)")
        n = len(self.observations)
        if len(self.actions) != n or len(self.action_masked) != n:
            raise ContractError("observations, actions and masks must have equal length")
        if self.rewards is not None:
            self.rewards = np.asarray(self.rewards, dtype=np.float64)
            if len(self.rewards) != n:
                raise ContractError("rewards length differs from step count")

    def __len__(self) -> int:
        return len(self.observations)

    @property
    def obs_dim(self) -> int:
        return self.observations.shape[1]

    @property
    def act_dim(self) -> int:
        return self.actions.shape[1]

    @property
    def fully_masked(self) -> bool:
        return bool(self.action_masked.all())

    def window(self, start: int, stop: int) -> "Trajectory":
        return Trajectory(self.observations[start:stop], self.actions[start:stop],
                          self.action_masked[start:stop],
                          None if self.rewards is None else self.rewards[start:stop],
                          dict(self.meta))

    def without_rewards(self) -> "Trajectory":
        return Trajectory(self.observations, self.actions, self.action_masked, None, dict(self.meta))

    def mask_actions(self) -> "Trajectory":
        return Trajectory(self.observations, np.zeros_like(self.actions),
                          np.ones(len(self), dtype=bool), self.rewards, dict(self.meta))


@dataclass
class WindowBatch:
    """Right-padded fragments of at most ``k`` steps.

    ``valid`` marks real steps; ``encoder_mask`` marks steps whose action the
    encoder must not see; ``target`` marks steps that carry a supervised action
    target.
    """

    obs: np.ndarray
    act: np.ndarray
    encoder_mask: np.ndarray
    valid: np.ndarray
    target: np.ndarray

    def __len__(self) -> int:
        return len(self.obs)

    @property
    def length(self) -> int:
        return self.obs.shape[1]


def make_batch(fragments, k: int, mask_all_actions: bool = False, obs_mean=None, obs_std=None) -> WindowBatch:
    """Pad fragments to a common width ``k`` (or the longest fragment if shorter)."""
    if not fragments:
        raise ContractError("cannot build a batch from zero fragments")
    width = max(len(f) for f in fragments)
    if width > k:
        raise ContractError(f"fragment of {width} steps exceeds context length {k}")
    od, ad = fragments[0].obs_dim, fragments[0].act_dim
    b = len(fragments)
    obs = np.zeros((b, width, od))
    act = np.zeros((b, width, ad))
    enc_mask = np.ones((b, width), dtype=bool)
    valid = np.zeros((b, width), dtype=bool)
    for i, f in enumerate(fragments):
        if len(f) == 0:
            raise ContractError("empty fragment in batch")
        if f.obs_dim != od or f.act_dim != ad:
            raise ContractError("fragments in one batch must share dimensions")
        n = len(f)
        o = f.observations
        if obs_mean is not None:
            o = (o - obs_mean) / obs_std
        obs[i, :n] = o
        act[i, :n] = np.where(f.action_masked[:, None], 0.0, f.actions)
        enc_mask[i, :n] = True if mask_all_actions else f.action_masked
        valid[i, :n] = True
    target = valid & ~_masks(fragments, width)
    return WindowBatch(obs, act, enc_mask, valid, target)


def _masks(fragments, width):
    out = np.ones((len(fragments), width), dtype=bool)
    for i, f in enumerate(fragments):
        out[i, :len(f)] = f.action_masked
    return out


def sample_fragments(trajs, count: int, k: int, rng: np.random.Generator, weights=None) -> list:
    """Draw ``count`` windows: a trajectory (length-weighted unless ``weights`` given),
    then a uniform start step, then up to ``k`` steps from there."""
    if not trajs:
        raise ContractError("cannot sample windows from an empty trajectory set")
    lengths = np.array([len(t) for t in trajs], dtype=np.float64)
    p = lengths if weights is None else np.asarray(weights, dtype=np.float64)
    p = p / p.sum()
    picks = rng.choice(len(trajs), size=count, p=p)
    out = []
    for i in picks:
        t = trajs[i]
        start = int(rng.integers(0, len(t)))
        out.append(t.window(start, start + k))
    return out
