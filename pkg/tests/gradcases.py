"""Random instance generators for finite-difference checks, one per autodiff primitive.

Each generator takes a numpy Generator and returns ``(build, arrays)`` where
``build(*tensors)`` produces a scalar.  Outputs are contracted with a fixed
random weight so every element of the Jacobian is exercised.  Inputs are kept
away from kinks (relu at 0, min at the limit, norms at 0).
"""

import numpy as np

from stitchformer import tensor as T


def _contract(out, w):
    return T.tsum(out * w)


def _away_from(x, point, gap=0.05):
    x = np.where(np.abs(x - point) < gap, x + 2 * gap, x)
    return x


def case_add(rng):
    w = rng.normal(size=(3, 4))
    return (lambda a, b: _contract(a + b, w)), [rng.normal(size=(3, 4)), rng.normal(size=(4,))]


def case_sub(rng):
    w = rng.normal(size=(3, 4))
    return (lambda a, b: _contract(a - b, w)), [rng.normal(size=(3, 4)), rng.normal(size=(3, 1))]


def case_mul(rng):
    w = rng.normal(size=(2, 3))
    return (lambda a, b: _contract(a * b, w)), [rng.normal(size=(2, 3)), rng.normal(size=(2, 3))]


def case_div(rng):
    w = rng.normal(size=(2, 3))
    b = rng.uniform(0.5, 2.0, size=(2, 3)) * rng.choice([-1, 1], size=(2, 3))
    return (lambda a, b: _contract(a / b, w)), [rng.normal(size=(2, 3)), b]


def case_matmul(rng):
    w = rng.normal(size=(2, 3, 5))
    return (lambda a, b: _contract(T.matmul(a, b), w)), [rng.normal(size=(2, 3, 4)), rng.normal(size=(4, 5))]


def case_batched_matmul(rng):
    w = rng.normal(size=(2, 3, 5))
    return (lambda a, b: _contract(T.matmul(a, b), w)), [rng.normal(size=(2, 3, 4)), rng.normal(size=(2, 4, 5))]


def case_relu(rng):
    w = rng.normal(size=(3, 4))
    return (lambda a: _contract(T.relu(a), w)), [_away_from(rng.normal(size=(3, 4)), 0.0)]


def case_tanh(rng):
    w = rng.normal(size=(3, 4))
    return (lambda a: _contract(T.tanh(a), w)), [rng.normal(size=(3, 4))]


def case_minimum(rng):
    w = rng.normal(size=(6,))
    return (lambda a: _contract(T.minimum(a, 0.3), w)), [_away_from(rng.normal(size=(6,)), 0.3)]


def case_sum(rng):
    w = rng.normal(size=(3,))
    return (lambda a: _contract(T.tsum(a, axis=1), w)), [rng.normal(size=(3, 4))]


def case_mean(rng):
    w = rng.normal(size=(4,))
    return (lambda a: _contract(T.mean(a, axis=0), w)), [rng.normal(size=(3, 4))]


def case_l2norm(rng):
    w = rng.normal(size=(3,))
    return (lambda a: _contract(T.l2norm(a, axis=-1), w)), [rng.normal(size=(3, 4)) + 0.1]


def case_l1norm(rng):
    w = rng.normal(size=(3,))
    return (lambda a: _contract(T.l1norm(a, axis=-1), w)), [_away_from(rng.normal(size=(3, 4)), 0.0)]


def case_reshape(rng):
    w = rng.normal(size=(4, 3))
    return (lambda a: _contract(T.reshape(a, (4, 3)), w)), [rng.normal(size=(2, 6))]


def case_transpose(rng):
    w = rng.normal(size=(4, 2, 3))
    return (lambda a: _contract(T.transpose(a, (2, 0, 1)), w)), [rng.normal(size=(2, 3, 4))]


def case_slice(rng):
    w = rng.normal(size=(2, 2))
    return (lambda a: _contract(a[1:3, ::2], w)), [rng.normal(size=(4, 4))]


def case_fancy_slice(rng):
    w = rng.normal(size=(3,))
    idx = (np.array([0, 1, 0]), np.array([2, 0, 2]))
    return (lambda a: _contract(a[idx], w)), [rng.normal(size=(2, 3))]


def case_concat(rng):
    w = rng.normal(size=(2, 5))
    return (lambda a, b: _contract(T.concat([a, b], axis=1), w)), [rng.normal(size=(2, 3)), rng.normal(size=(2, 2))]


def case_stack(rng):
    w = rng.normal(size=(2, 2, 3))
    return (lambda a, b: _contract(T.stack([a, b], axis=1), w)), [rng.normal(size=(2, 3)), rng.normal(size=(2, 3))]


def case_softmax(rng):
    w = rng.normal(size=(3, 4))
    return (lambda a: _contract(T.softmax(a, axis=-1), w)), [rng.normal(size=(3, 4))]


def case_layer_norm(rng):
    w = rng.normal(size=(3, 5))
    return (lambda x, g, b: _contract(T.layer_norm(x, g, b), w)), [
        rng.normal(size=(3, 5)), rng.normal(size=(5,)), rng.normal(size=(5,))]


def case_dropout(rng):
    w = rng.normal(size=(4, 5))
    seed = int(rng.integers(2 ** 31))
    return (lambda a: _contract(T.dropout(a, 0.3, True, np.random.default_rng(seed)), w)), [rng.normal(size=(4, 5))]


def case_embedding(rng):
    w = rng.normal(size=(5, 3))
    idx = rng.integers(0, 4, size=5)  # repeats exercise gradient accumulation
    return (lambda table: _contract(T.embedding(table, idx), w)), [rng.normal(size=(4, 3))]


PRIMITIVES = {name[5:]: fn for name, fn in sorted(globals().items()) if name.startswith("case_")}
