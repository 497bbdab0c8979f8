"""Latent-conditioned causal transformer policy.

Each step of a window contributes three tokens in the order ``(z, s_t, a_t)``;
the action for step ``t`` is read from the hidden state of the ``s_t`` token,
so under the causal mask it sees ``z`` and everything up to ``s_t`` but never
``a_t`` or later steps.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .. import tensor as T
from ..errors import ContractError
from ..tensor import RngStream, Tensor
from ..trajectory import Trajectory
from .layers import Block, Embedding, LayerNorm, Linear, Module, causal_mask


@dataclass
class PolicyConfig:
    obs_dim: int
    act_dim: int
    z_dim: int = 16
    hidden: int = 64
    layers: int = 3
    heads: int = 2
    dropout: float = 0.1
    context: int = 20
    ff_mult: int = 4

    def to_dict(self) -> dict:
        return asdict(self)


class PolicyModel(Module):
    def __init__(self, cfg: PolicyConfig, seed: int = 0):
        rng = np.random.default_rng([seed, 1])
        d = cfg.hidden
        self.cfg = cfg
        self.embed_z = Linear(cfg.z_dim, d, rng)
        self.embed_s = Linear(cfg.obs_dim, d, rng)
        self.embed_a = Linear(cfg.act_dim, d, rng)
        self.embed_t = Embedding(cfg.context, d, rng)
        self.ln_in = LayerNorm(d)
        self.blocks = [Block(d, cfg.heads, cfg.dropout, rng, cfg.ff_mult) for _ in range(cfg.layers)]
        self.ln_out = LayerNorm(d)
        self.head = Linear(d, cfg.act_dim, rng)
        self.dropout_stream = RngStream(seed, "policy-dropout")

    def __call__(self, z, obs: np.ndarray, act: np.ndarray) -> Tensor:
        """Batched forward.

        ``z``: (B, z_dim) tensor or array, one conditioning vector per window.
        ``obs``: (B, L, obs_dim); ``act``: (B, L, act_dim).  Returns (B, L, act_dim).
        """
        cfg = self.cfg
        z = T.as_tensor(z)
        b, length = obs.shape[0], obs.shape[1]
        if length > cfg.context:
            raise ContractError(f"window of {length} steps exceeds context {cfg.context}")
        if z.shape != (b, cfg.z_dim):
            raise ContractError(f"z must have shape ({b}, {cfg.z_dim}), got {z.shape}")
        if obs.shape[2] != cfg.obs_dim or act.shape[:2] != (b, length) or act.shape[2] != cfg.act_dim:
            raise ContractError(f"window dims {obs.shape}/{act.shape} do not match config")
        gen = self.dropout_stream.next() if self.training else None
        pos = self.embed_t(np.arange(length))
        ez = self.embed_z(z).reshape(b, 1, cfg.hidden) + pos
        es = self.embed_s(obs) + pos
        ea = self.embed_a(act) + pos
        x = T.stack([ez, es, ea], axis=2).reshape(b, 3 * length, cfg.hidden)
        x = T.dropout(self.ln_in(x), cfg.dropout, self.training, gen)
        mask = causal_mask(3 * length)
        for block in self.blocks:
            x = block(x, mask, gen)
        h = self.ln_out(x)[:, 1::3, :]
        return self.head(h)


def _window_arrays(window: Trajectory, obs_mean=None, obs_std=None):
    obs = window.observations
    if obs_mean is not None:
        obs = (obs - obs_mean) / obs_std
    act = np.where(window.action_masked[:, None], 0.0, window.actions)
    return obs[None], act[None]


def policy_forward(model: PolicyModel, z, window: Trajectory, obs_mean=None, obs_std=None) -> np.ndarray:
    """Predicted action for every step of a single window, shape (L, act_dim)."""
    if len(window) == 0:
        raise ContractError("window must contain at least one step")
    z = np.asarray(z.data if isinstance(z, Tensor) else z, dtype=np.float64).reshape(-1)
    if z.shape[0] != model.cfg.z_dim:
        raise ContractError(f"z has dimension {z.shape[0]}, model expects {model.cfg.z_dim}")
    obs, act = _window_arrays(window, obs_mean, obs_std)
    with T.no_grad():
        out = model(z[None], obs, act)
    return out.data[0].astype(np.float64)


def to_env_action(pred: np.ndarray, discrete: bool, low=None, high=None):
    """Map a predicted action vector to an environment action."""
    if discrete:
        return int(np.argmax(pred))
    return np.clip(pred, low, high)


def greedy_action(model: PolicyModel, z, window: Trajectory, discrete: bool, low=None, high=None,
                  obs_mean=None, obs_std=None):
    pred = policy_forward(model, z, window, obs_mean, obs_std)[-1]
    return to_env_action(pred, discrete, low, high)
