import numpy as np
import pytest

from stitchformer import tensor as T
from stitchformer.errors import ContractError
from stitchformer.models import (EncoderConfig, EncoderModel, LatentEmbedding, PolicyConfig, PolicyModel,
                                 encoder_forward, greedy_action, policy_forward, to_env_action)
from stitchformer.trajectory import Trajectory, make_batch

OD, AD = 5, 3


def small_policy(seed=0, context=6):
    return PolicyModel(PolicyConfig(OD, AD, z_dim=16, hidden=16, layers=2, heads=2, context=context), seed).eval()


def small_encoder(seed=0, context=6):
    return EncoderModel(EncoderConfig(OD, AD, z_dim=16, hidden=16, layers=2, heads=8, context=context), seed).eval()


def rand_traj(rng, n, masked=False):
    acts = rng.normal(size=(n, AD))
    return Trajectory(rng.normal(size=(n, OD)), acts, np.full(n, masked))


def test_default_architecture_matches_tables():
    p = PolicyConfig(4, 2)
    e = EncoderConfig(4, 2)
    assert (p.layers, p.heads, p.hidden, p.z_dim, p.dropout, p.context) == (3, 2, 64, 16, 0.1, 20)
    assert (e.layers, e.heads, e.hidden, e.z_dim, e.dropout) == (3, 8, 64, 16, 0.1)


def test_single_step_window_gives_one_action():
    rng = np.random.default_rng(0)
    out = policy_forward(small_policy(), np.zeros(16), rand_traj(rng, 1))
    assert out.shape == (1, AD)


def test_policy_contract_errors():
    rng = np.random.default_rng(0)
    pol = small_policy(context=4)
    with pytest.raises(ContractError):
        policy_forward(pol, np.zeros(16), rand_traj(rng, 5))
    with pytest.raises(ContractError):
        policy_forward(pol, np.zeros(8), rand_traj(rng, 2))
    with pytest.raises(ContractError):
        policy_forward(pol, np.zeros(16), Trajectory(np.zeros((0, OD)), np.zeros((0, AD)), np.zeros(0)))
    with pytest.raises(ContractError):
        pol(np.zeros((1, 16)), np.zeros((1, 2, OD + 1)), np.zeros((1, 2, AD)))


def test_causality():
    """Changing a_t or anything later never moves the prediction for steps <= t."""
    rng = np.random.default_rng(1)
    pol = small_policy()
    z = rng.uniform(-1, 1, 16)
    traj = rand_traj(rng, 6)
    base = policy_forward(pol, z, traj)
    for t in range(6):
        pert = Trajectory(traj.observations.copy(), traj.actions.copy(), traj.action_masked)
        pert.actions[t:] += rng.normal(size=pert.actions[t:].shape)
        pert.observations[t + 1:] += rng.normal(size=pert.observations[t + 1:].shape)
        out = policy_forward(pol, z, pert)
        assert np.allclose(out[:t + 1], base[:t + 1], atol=1e-12)
        if t < 5:
            assert not np.allclose(out[t + 1:], base[t + 1:])


def test_window_invariance_matches_explicit_truncation():
    rng = np.random.default_rng(2)
    pol = small_policy(context=4)
    z = rng.uniform(-1, 1, 16)
    a, b = rand_traj(rng, 10), rand_traj(rng, 10)
    b.observations[-4:] = a.observations[-4:]
    b.actions[-4:] = a.actions[-4:]
    out_a = policy_forward(pol, z, a.window(6, 10))
    out_b = policy_forward(pol, z, b.window(6, 10))
    assert np.array_equal(out_a, out_b)


def test_greedy_action_examples():
    assert to_env_action(np.array([0.1, 0.9]), discrete=True) == 1
    assert to_env_action(np.array([2.0]), discrete=False, low=-1.0, high=1.0) == 1.0
    rng = np.random.default_rng(3)
    pol = small_policy()
    traj = rand_traj(rng, 3)
    z = rng.uniform(-1, 1, 16)
    raw = policy_forward(pol, z, traj)[-1]
    assert np.array_equal(greedy_action(pol, z, traj, False, -10.0, 10.0), raw)
    assert greedy_action(pol, z, traj, True) == int(np.argmax(raw))


def test_encoder_bounded_and_deterministic():
    rng = np.random.default_rng(4)
    enc = small_encoder()
    trajs = [rand_traj(rng, int(rng.integers(1, 7)), masked=bool(rng.integers(2))) for _ in range(1000)]
    for i in range(0, 1000, 100):
        z = enc.encode_batch(make_batch(trajs[i:i + 100], 6)).data
        assert z.shape == (100, 16)
        assert np.all(np.abs(z) < 1.0)
    t = trajs[0]
    assert np.array_equal(encoder_forward(enc, t), encoder_forward(enc, t))


def test_encoder_bound_holds_when_saturated():
    enc = small_encoder()
    enc.out.bias.data[:] = 1e6
    z = encoder_forward(enc, rand_traj(np.random.default_rng(0), 3))
    assert np.all(np.abs(z) < 1.0)


def test_encoder_ignores_masked_actions():
    rng = np.random.default_rng(5)
    enc = small_encoder()
    obs = rng.normal(size=(5, OD))
    zeros = Trajectory(obs, np.zeros((5, AD)), np.ones(5, dtype=bool))
    noisy = Trajectory(obs, rng.normal(size=(5, AD)) * 100, np.ones(5, dtype=bool))
    assert np.array_equal(encoder_forward(enc, zeros), encoder_forward(enc, noisy))
    seen = Trajectory(obs, rng.normal(size=(5, AD)), np.zeros(5, dtype=bool))
    assert not np.array_equal(encoder_forward(enc, zeros), encoder_forward(enc, seen))


def test_encoder_ignores_padding():
    rng = np.random.default_rng(6)
    enc = small_encoder()
    short = rand_traj(rng, 2)
    alone = enc.encode_batch(make_batch([short], 6)).data[0]
    padded = enc.encode_batch(make_batch([short, rand_traj(rng, 6)], 6)).data[0]
    assert np.allclose(alone, padded, atol=1e-12)


def test_encoder_rejects_empty_trajectory():
    with pytest.raises(ContractError):
        encoder_forward(small_encoder(), Trajectory(np.zeros((0, OD)), np.zeros((0, AD)), np.zeros(0)))


def test_every_parameter_receives_gradient():
    rng = np.random.default_rng(7)
    pol = PolicyModel(PolicyConfig(OD, AD, hidden=16, heads=2, context=6), 0).train()
    enc = EncoderModel(EncoderConfig(OD, AD, hidden=16, heads=8, context=6), 0).train()
    batch = make_batch([rand_traj(rng, int(rng.integers(2, 7))) for _ in range(8)], 6)
    z = enc.encode_batch(batch)
    pred = pol(z, batch.obs, batch.act)
    T.mean(T.l2norm(pred[np.nonzero(batch.target)] - batch.act[np.nonzero(batch.target)])).backward()
    for name, p in list(pol.named_parameters()) + list(enc.named_parameters()):
        assert np.abs(p.grad).max() > 0, f"{name} received no gradient"


def test_latent_embedding_in_box():
    z = LatentEmbedding(16, seed=3)
    assert np.all(np.abs(z.value()) <= 1.0)
    z.z.data[:] = 5.0
    z.clamp()
    assert np.all(z.value() == 1.0)


def test_state_dict_round_trip():
    a, b = small_policy(seed=1), small_policy(seed=2)
    b.load_state_dict(a.state_dict())
    rng = np.random.default_rng(8)
    traj = rand_traj(rng, 4)
    assert np.array_equal(policy_forward(a, np.zeros(16), traj), policy_forward(b, np.zeros(16), traj))
    with pytest.raises(ContractError):
        b.load_state_dict({"nope": np.zeros(1)})
