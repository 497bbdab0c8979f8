"""Bidirectional hindsight-information extractor and the learnable context vector."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .. import tensor as T
from ..errors import ContractError
from ..tensor import RngStream, Tensor
from ..trajectory import Trajectory, make_batch
from .layers import Block, Embedding, LayerNorm, Linear, Module, key_padding_mask

# tanh saturates to exactly 1.0 in floating point; scaling keeps outputs strictly inside (-1, 1).
SQUASH_BOUND = 0.999


@dataclass
class EncoderConfig:
    obs_dim: int
    act_dim: int
    z_dim: int = 16
    hidden: int = 64
    layers: int = 3
    heads: int = 8
    dropout: float = 0.1
    context: int = 20
    ff_mult: int = 4

    def to_dict(self) -> dict:
        return asdict(self)


class EncoderModel(Module):
    """One token per step built from (observation, visible action, mask flag).

    Masked actions are zeroed before embedding, so the output cannot depend on them.
    Pooling is a mean over the valid final-layer states.
    """

    def __init__(self, cfg: EncoderConfig, seed: int = 0):
        rng = np.random.default_rng([seed, 2])
        d = cfg.hidden
        self.cfg = cfg
        self.embed = Linear(cfg.obs_dim + cfg.act_dim + 1, d, rng)
        self.embed_t = Embedding(cfg.context, d, rng)
        self.ln_in = LayerNorm(d)
        self.blocks = [Block(d, cfg.heads, cfg.dropout, rng, cfg.ff_mult) for _ in range(cfg.layers)]
        self.ln_out = LayerNorm(d)
        self.out = Linear(d, cfg.z_dim, rng)
        self.dropout_stream = RngStream(seed, "encoder-dropout")

    def __call__(self, obs: np.ndarray, act: np.ndarray, action_mask: np.ndarray, valid: np.ndarray) -> Tensor:
        cfg = self.cfg
        b, length = obs.shape[:2]
        if length > cfg.context:
            raise ContractError(f"window of {length} steps exceeds encoder context {cfg.context}")
        if obs.shape[2] != cfg.obs_dim or act.shape[2] != cfg.act_dim:
            raise ContractError("window dims do not match encoder config")
        if not valid.any(axis=1).all():
            raise ContractError("every window needs at least one valid step")
        flag = action_mask.astype(np.float64)[..., None]
        inp = np.concatenate([obs, act * (1.0 - flag), flag], axis=-1)
        gen = self.dropout_stream.next() if self.training else None
        x = self.embed(inp) + self.embed_t(np.arange(length))
        x = T.dropout(self.ln_in(x), cfg.dropout, self.training, gen)
        mask = key_padding_mask(valid)
        for block in self.blocks:
            x = block(x, mask, gen)
        h = self.ln_out(x)
        w = valid.astype(np.float64)
        w = (w / w.sum(axis=1, keepdims=True))[..., None]
        pooled = (h * w).sum(axis=1)
        return T.tanh(self.out(pooled)) * SQUASH_BOUND

    def encode_batch(self, batch) -> Tensor:
        return self(batch.obs, batch.act, batch.encoder_mask, batch.valid)


def encoder_forward(model: EncoderModel, traj: Trajectory, obs_mean=None, obs_std=None) -> np.ndarray:
    if len(traj) == 0:
        raise ContractError("cannot encode an empty trajectory")
    batch = make_batch([traj], model.cfg.context, obs_mean=obs_mean, obs_std=obs_std)
    with T.no_grad():
        z = model.encode_batch(batch)
    return z.data[0].astype(np.float64)


class LatentEmbedding:
    """The learnable context vector z*, kept inside [-1, 1]^d."""

    def __init__(self, dim: int = 16, seed: int = 0):
        rng = np.random.default_rng([seed, 3])
        self.z = Tensor(rng.uniform(-1.0, 1.0, size=dim), requires_grad=True, name="z_star")

    @property
    def dim(self) -> int:
        return self.z.shape[0]

    def parameters(self) -> list:
        return [self.z]

    def clamp(self) -> None:
        np.clip(self.z.data, -1.0, 1.0, out=self.z.data)

    def value(self) -> np.ndarray:
        return self.z.data.copy()
