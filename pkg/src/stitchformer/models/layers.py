"""Small module system and transformer building blocks on top of the tensor core."""

from __future__ import annotations

import numpy as np

from .. import tensor as T
from ..errors import ContractError
from ..tensor import Tensor

MASK_VALUE = -1e9


class Module:
    training = True

    def named_parameters(self, prefix: str = ""):
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, list) and value and isinstance(value[0], Module):
                for i, m in enumerate(value):
                    yield from m.named_parameters(f"{full}.{i}.")

    def parameters(self) -> list:
        return [p for _, p in self.named_parameters()]

    def modules(self):
        yield self
        for value in vars(self).values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, list) and value and isinstance(value[0], Module):
                for m in value:
                    yield from m.modules()

    def train(self, mode: bool = True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> dict:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, arrays: dict) -> None:
        params = dict(self.named_parameters())
        missing = set(params) - set(arrays)
        extra = set(arrays) - set(params)
        if missing or extra:
            raise ContractError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, p in params.items():
            if tuple(arrays[name].shape) != p.shape:
                raise ContractError(f"{name}: shape {arrays[name].shape} != {p.shape}")
            p.data = np.array(arrays[name], dtype=T.get_dtype())
            p.zero_grad()


def _param(arr, name):
    return Tensor(arr, requires_grad=True, name=name)


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, std: float = 0.02):
        self.weight = _param(rng.normal(0.0, std, size=(n_in, n_out)), "weight")
        self.bias = _param(np.zeros(n_out), "bias")

    def __call__(self, x):
        return T.matmul(x, self.weight) + self.bias


class LayerNorm(Module):
    def __init__(self, d: int):
        self.gamma = _param(np.ones(d), "gamma")
        self.beta = _param(np.zeros(d), "beta")

    def __call__(self, x):
        return T.layer_norm(x, self.gamma, self.beta)


class Embedding(Module):
    def __init__(self, n: int, d: int, rng: np.random.Generator, std: float = 0.02):
        self.weight = _param(rng.normal(0.0, std, size=(n, d)), "weight")

    def __call__(self, idx):
        return T.embedding(self.weight, idx)


class SelfAttention(Module):
    def __init__(self, d: int, heads: int, dropout: float, rng: np.random.Generator):
        if d % heads:
            raise ContractError(f"hidden width {d} not divisible by {heads} heads")
        self.heads = heads
        self.dropout = dropout
        self.qkv = Linear(d, 3 * d, rng)
        self.proj = Linear(d, d, rng)

    def __call__(self, x, mask: np.ndarray, gen):
        b, t, d = x.shape
        hd = d // self.heads
        qkv = self.qkv(x).reshape(b, t, 3, self.heads, hd).transpose(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        att = T.matmul(q, k.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(hd)) + mask
        att = T.dropout(T.softmax(att, axis=-1), self.dropout, self.training, gen)
        y = T.matmul(att, v).transpose(0, 2, 1, 3).reshape(b, t, d)
        return self.proj(y)


class Block(Module):
    """Pre-norm transformer block with a ReLU feed-forward layer."""

    def __init__(self, d: int, heads: int, dropout: float, rng: np.random.Generator, ff_mult: int = 4):
        self.dropout = dropout
        self.ln1 = LayerNorm(d)
        self.attn = SelfAttention(d, heads, dropout, rng)
        self.ln2 = LayerNorm(d)
        self.fc1 = Linear(d, ff_mult * d, rng)
        self.fc2 = Linear(ff_mult * d, d, rng)

    def __call__(self, x, mask, gen):
        x = x + T.dropout(self.attn(self.ln1(x), mask, gen), self.dropout, self.training, gen)
        h = self.fc2(T.relu(self.fc1(self.ln2(x))))
        return x + T.dropout(h, self.dropout, self.training, gen)


def causal_mask(t: int) -> np.ndarray:
    return np.triu(np.full((t, t), MASK_VALUE), k=1)[None, None]


def key_padding_mask(valid: np.ndarray) -> np.ndarray:
    return np.where(valid, 0.0, MASK_VALUE)[:, None, None, :]
