"""ContextFormer losses and the three-phase training schedule.

Per batch group the schedule runs, in order:

A. policy loss on a mixed expert/sub-optimal batch -> update policy and encoder;
B. contextual loss with z* held constant -> update the encoder;
C. contextual loss with both networks frozen -> update z*, then clamp it.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .errors import ContractError
from .models import EncoderModel, LatentEmbedding, PolicyModel
from .tensor import AdamW, Tensor
from .trajectory import WindowBatch, make_batch, sample_fragments

METRIC_FIELDS = ("epoch", "loss_a", "loss_b", "loss_c", "grad_norm_policy", "grad_norm_encoder",
                 "grad_norm_z", "lr", "seconds")


@dataclass
class LossConfig:
    lambda1: float = 1.0
    lambda2: float = 0.5
    norm_kind: str = "L2"
    repulsion_clip: float = 10.0

    def __post_init__(self):
        if not self.lambda1 > 0:
            raise ContractError("lambda1 must be > 0")
        if self.lambda2 < 0:
            raise ContractError("lambda2 must be >= 0")
        if self.norm_kind not in ("L1", "L2"):
            raise ContractError(f"norm_kind must be L1 or L2, got {self.norm_kind!r}")
        if not self.repulsion_clip > 0:
            raise ContractError("repulsion_clip must be > 0")


@dataclass
class TrainConfig:
    batch_size: int = 64
    groups_per_epoch: int = 50
    epochs: int = 20
    context: int = 20
    lr: float = 1.2e-4
    weight_decay: float = 1e-4
    warmup_steps: int = 10000
    z_lr: float = 1e-2
    z_warmup_steps: int = 0
    conditioning: str = "LfD"
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        if self.batch_size < 1 or self.groups_per_epoch < 1 or self.epochs < 0 or self.context < 1:
            raise ContractError("batch_size, groups_per_epoch and context must be >= 1; epochs >= 0")
        if self.conditioning not in ("LfD", "LfO"):
            raise ContractError(f"conditioning must be LfD or LfO, got {self.conditioning!r}")


def _norm(x: Tensor, kind: str) -> Tensor:
    return T.l2norm(x, axis=-1) if kind == "L2" else T.l1norm(x, axis=-1)


def _np_norm(x: np.ndarray, kind: str) -> np.ndarray:
    return np.sqrt((x * x).sum(axis=-1)) if kind == "L2" else np.abs(x).sum(axis=-1)


# -- losses --------------------------------------------------------------------
def policy_loss_from(pred: Tensor, batch: WindowBatch, norm_kind: str = "L2") -> Tensor:
    """Mean action-error norm over every step that carries a target."""
    if len(batch) == 0 or not batch.target.any():
        raise ContractError("policy loss needs at least one step with a target action")
    idx = np.nonzero(batch.target)
    err = pred[idx] - batch.act[idx]
    return T.mean(_norm(err, norm_kind))


def policy_loss(policy: PolicyModel, encoder: EncoderModel, batch: WindowBatch, norm_kind: str = "L2") -> Tensor:
    """Policy loss: the policy is conditioned on the encoder's summary of the very window it predicts."""
    if len(batch) == 0:
        raise ContractError("empty batch")
    z = encoder.encode_batch(batch)
    pred = policy(z, batch.obs, batch.act)
    return policy_loss_from(pred, batch, norm_kind)


def contextual_loss_from(z_star: Tensor, z_exp: Tensor, z_sub: Tensor, cfg: LossConfig) -> Tensor:
    """lambda1 * mean ||z* - I(expert)|| - lambda2 * mean min(||z* - I(sub-optimal)||, M)."""
    if z_exp.shape[0] == 0 or z_sub.shape[0] == 0:
        raise ContractError("contextual loss needs non-empty expert and sub-optimal batches")
    attract = T.mean(_norm(z_star - z_exp, cfg.norm_kind))
    repel = T.mean(T.minimum(_norm(z_star - z_sub, cfg.norm_kind), cfg.repulsion_clip))
    return attract * cfg.lambda1 - repel * cfg.lambda2


def contextual_loss(z_star, encoder: EncoderModel, expert_batch: WindowBatch, subopt_batch: WindowBatch,
                    cfg: LossConfig) -> Tensor:
    if len(expert_batch) == 0 or len(subopt_batch) == 0:
        raise ContractError("contextual loss needs non-empty expert and sub-optimal batches")
    z = z_star.z if isinstance(z_star, LatentEmbedding) else T.as_tensor(z_star)
    return contextual_loss_from(z, encoder.encode_batch(expert_batch), encoder.encode_batch(subopt_batch), cfg)


def reference_contextual_loss(z_star: np.ndarray, z_exp: np.ndarray, z_sub: np.ndarray, cfg: LossConfig) -> float:
    """Tape-free recomputation used to cross-check the differentiable version."""
    a = _np_norm(z_star[None] - z_exp, cfg.norm_kind).mean()
    r = np.minimum(_np_norm(z_star[None] - z_sub, cfg.norm_kind), cfg.repulsion_clip).mean()
    return float(cfg.lambda1 * a - cfg.lambda2 * r)


# -- training state ------------------------------------------------------------
@dataclass
class TrainState:
    policy_opt: AdamW
    encoder_opt: AdamW
    z_opt: AdamW
    batch_size: int
    seed: int
    epoch: int = 0
    rng: np.random.Generator = None

    @classmethod
    def create(cls, policy: PolicyModel, encoder: EncoderModel, z_star: LatentEmbedding, cfg: TrainConfig):
        pol = AdamW(policy.parameters(), cfg.lr, cfg.weight_decay, cfg.warmup_steps)
        enc = AdamW(encoder.parameters(), cfg.lr, cfg.weight_decay, cfg.warmup_steps)
        zo = AdamW(z_star.parameters(), cfg.z_lr, 0.0, cfg.z_warmup_steps)
        ids = [{id(p) for p in o.params} for o in (pol, enc, zo)]
        if ids[0] & ids[1] or ids[0] & ids[2] or ids[1] & ids[2]:
            raise ContractError("optimizers must own disjoint parameter sets")
        return cls(pol, enc, zo, cfg.batch_size, cfg.seed, 0, np.random.default_rng([cfg.seed, 21]))


def _zero_all(*modules) -> None:
    for m in modules:
        for p in m.parameters():
            p.zero_grad()


def phase_a_step(state: TrainState, policy: PolicyModel, encoder: EncoderModel, mixed_batch: WindowBatch,
                 norm_kind: str = "L2") -> tuple:
    """One update of policy and encoder on the policy loss.  Returns (loss, policy grad norm, encoder grad norm)."""
    policy.train()
    encoder.train()
    _zero_all(policy, encoder)
    loss = policy_loss(policy, encoder, mixed_batch, norm_kind)
    loss.backward()
    gp, ge = state.policy_opt.grad_norm(), state.encoder_opt.grad_norm()
    state.policy_opt.step()
    state.encoder_opt.step()
    return loss.item(), gp, ge


def phase_b_step(state: TrainState, encoder: EncoderModel, z_star: LatentEmbedding, expert_batch: WindowBatch,
                 subopt_batch: WindowBatch, cfg: LossConfig) -> tuple:
    """One encoder update on the contextual loss with z* treated as a constant.  Returns (loss, encoder grad norm)."""
    encoder.train()
    _zero_all(encoder)
    loss = contextual_loss(Tensor(z_star.value()), encoder, expert_batch, subopt_batch, cfg)
    loss.backward()
    g = state.encoder_opt.grad_norm()
    state.encoder_opt.step()
    return loss.item(), g


def phase_c_step(state: TrainState, z_star: LatentEmbedding, encoder: EncoderModel, expert_batch: WindowBatch,
                 subopt_batch: WindowBatch, cfg: LossConfig, z_exp=None, z_sub=None) -> tuple:
    """One z* update on the contextual loss with the encoder frozen (eval mode, no tape), then clamp.

    ``z_exp``/``z_sub`` may carry precomputed encodings to skip the encoder pass.
    Returns (loss, z* grad norm).
    """
    if z_exp is None or z_sub is None:
        encoder.eval()
        with T.no_grad():
            z_exp = encoder.encode_batch(expert_batch).data
            z_sub = encoder.encode_batch(subopt_batch).data
        encoder.train()
    z_star.z.zero_grad()
    loss = contextual_loss_from(z_star.z, Tensor(z_exp), Tensor(z_sub), cfg)
    loss.backward()
    g = state.z_opt.grad_norm()
    state.z_opt.step()
    z_star.clamp()
    z_star.z.zero_grad()  # outside phase C the z* gradient buffer stays zero
    return loss.item(), g


# -- sampling ------------------------------------------------------------------
def _steps(trajs) -> int:
    return int(sum(len(t) for t in trajs))


def mixed_fragments(expert, subopt, count: int, k: int, rng) -> list:
    """Policy-loss mixture: each window comes from the expert split with probability proportional to its step count."""
    n_exp, n_sub = _steps(expert), _steps(subopt)
    from_expert = rng.random(count) < n_exp / (n_exp + n_sub)
    ne = int(from_expert.sum())
    frags = []
    if ne:
        frags += sample_fragments(expert, ne, k, rng)
    if count - ne:
        frags += sample_fragments(subopt, count - ne, k, rng)
    return frags


@dataclass
class Learner:
    """Everything a ContextFormer run owns."""

    policy: PolicyModel
    encoder: EncoderModel
    z_star: LatentEmbedding
    state: TrainState
    cfg: TrainConfig
    obs_mean: np.ndarray
    obs_std: np.ndarray
    history: list = field(default_factory=list)

    def batch(self, frags) -> WindowBatch:
        return make_batch(frags, self.cfg.context, mask_all_actions=self.cfg.conditioning == "LfO",
                          obs_mean=self.obs_mean, obs_std=self.obs_std)


def check_splits(expert, subopt) -> None:
    if not expert:
        raise ContractError("dataset has no expert demonstrations")
    if not subopt:
        raise ContractError("dataset has no sub-optimal episodes")


def train_epoch(learner: Learner, expert, subopt) -> dict:
    """Run ``groups_per_epoch`` A->B->C groups and return the epoch metrics record."""
    check_splits(expert, subopt)
    cfg, st = learner.cfg, learner.state
    rng, k, b = st.rng, cfg.context, cfg.batch_size
    if not any(not t.fully_masked for t in list(expert) + list(subopt)):
        raise ContractError("no step in the dataset carries an action target")
    t0 = time.perf_counter()
    sums = np.zeros(6)
    for _ in range(cfg.groups_per_epoch):
        mixed = learner.batch(mixed_fragments(expert, subopt, b, k, rng))
        while not mixed.target.any():
            mixed = learner.batch(mixed_fragments(expert, subopt, b, k, rng))
        la, gp, ge = phase_a_step(st, learner.policy, learner.encoder, mixed, cfg.loss.norm_kind)
        eb = learner.batch(sample_fragments(expert, b, k, rng))
        sb = learner.batch(sample_fragments(subopt, b, k, rng))
        lb, ge_b = phase_b_step(st, learner.encoder, learner.z_star, eb, sb, cfg.loss)
        lc, gz = phase_c_step(st, learner.z_star, learner.encoder, eb, sb, cfg.loss)
        sums += (la, lb, lc, gp, ge + ge_b, gz)
    st.epoch += 1
    n = cfg.groups_per_epoch
    rec = {"epoch": st.epoch, "loss_a": sums[0] / n, "loss_b": sums[1] / n, "loss_c": sums[2] / n,
           "grad_norm_policy": sums[3] / n, "grad_norm_encoder": sums[4] / (2 * n), "grad_norm_z": sums[5] / n,
           "lr": st.policy_opt.lr, "seconds": time.perf_counter() - t0}
    rec = {key: (float(v) if key != "epoch" else int(v)) for key, v in rec.items()}
    learner.history.append(rec)
    return rec


def build_learner(obs_dim: int, act_dim: int, cfg: TrainConfig, obs_mean, obs_std, policy_kwargs=None,
                  encoder_kwargs=None) -> Learner:
    from .models import EncoderConfig, PolicyConfig

    pk = dict(policy_kwargs or {})
    ek = dict(encoder_kwargs or {})
    pcfg = PolicyConfig(obs_dim, act_dim, context=cfg.context, **pk)
    ek.setdefault("z_dim", pcfg.z_dim)
    if ek["z_dim"] != pcfg.z_dim:
        raise ContractError("policy and encoder must share z_dim")
    ecfg = EncoderConfig(obs_dim, act_dim, context=cfg.context, **ek)
    policy = PolicyModel(pcfg, cfg.seed)
    encoder = EncoderModel(ecfg, cfg.seed)
    z_star = LatentEmbedding(pcfg.z_dim, cfg.seed)
    state = TrainState.create(policy, encoder, z_star, cfg)
    return Learner(policy, encoder, z_star, state, cfg, np.asarray(obs_mean, dtype=np.float64),
                   np.asarray(obs_std, dtype=np.float64))


def train(learner: Learner, expert, subopt, metrics_path=None, on_epoch=None) -> list:
    """Train for ``cfg.epochs`` epochs, appending each record to ``metrics_path`` (JSON lines)."""
    check_splits(expert, subopt)
    expert = [t.without_rewards() for t in expert]
    subopt = [t.without_rewards() for t in subopt]
    out = []
    for _ in range(learner.cfg.epochs):
        rec = train_epoch(learner, expert, subopt)
        out.append(rec)
        if metrics_path is not None:
            append_metrics(metrics_path, rec)
        if on_epoch is not None:
            on_epoch(rec)
    return out


def append_metrics(path, rec: dict) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps({k: rec[k] for k in METRIC_FIELDS}) + "\n")


def train_control(policy: PolicyModel, trajs, cfg: TrainConfig, obs_mean, obs_std, steps: int) -> list:
    """Behaviour cloning with a constant zero conditioning token (the non-stitching control)."""
    if not trajs:
        raise ContractError("control needs at least one training episode")
    trajs = [t.without_rewards() for t in trajs]
    opt = AdamW(policy.parameters(), cfg.lr, cfg.weight_decay, cfg.warmup_steps)
    rng = np.random.default_rng([cfg.seed, 21])
    zeros = np.zeros((cfg.batch_size, policy.cfg.z_dim))
    policy.train()
    losses = []
    for _ in range(steps):
        batch = make_batch(sample_fragments(trajs, cfg.batch_size, cfg.context, rng), cfg.context,
                           obs_mean=obs_mean, obs_std=obs_std)
        if not batch.target.any():
            continue
        policy.zero_grad()
        loss = policy_loss_from(policy(zeros, batch.obs, batch.act), batch, cfg.loss.norm_kind)
        loss.backward()
        opt.step()
        losses.append(loss.item())
    policy.eval()
    return losses


def learner_arrays(learner: Learner) -> dict:
    arrays = {f"policy.{k}": v for k, v in learner.policy.state_dict().items()}
    arrays.update({f"encoder.{k}": v for k, v in learner.encoder.state_dict().items()})
    arrays["z_star"] = learner.z_star.value()
    arrays["obs_mean"] = learner.obs_mean
    arrays["obs_std"] = learner.obs_std
    return arrays


def learner_config(learner: Learner) -> dict:
    cfg = asdict(learner.cfg)
    return {"train": cfg, "policy": learner.policy.cfg.to_dict(), "encoder": learner.encoder.cfg.to_dict()}
