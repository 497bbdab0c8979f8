"""Evaluation loop, score normalisation, the zero-token control, and the stitching experiment."""

from __future__ import annotations

import copy
import functools
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .data import Dataset, stitching_violations
from .envs import Env, GridEnv, make_env
from .errors import ContractError
from .models import PolicyConfig, PolicyModel
from .objectives import TrainConfig, build_learner, train, train_control


@dataclass
class EvalReport:
    episodes: int
    mean_return: float
    success_rate: float
    normalized_score: float | None
    returns: list
    successes: list
    seed: int
    context: int
    lengths: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.returns) != self.episodes:
            raise ContractError("episode count does not match the per-episode list")
        if not 0.0 <= self.success_rate <= 1.0:
            raise ContractError("success rate outside [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


# -- agents --------------------------------------------------------------------
class ContextAgent:
    """Greedy actions from a latent-conditioned policy fed the last ``k`` steps."""

    def __init__(self, policy: PolicyModel, z, env: Env, obs_mean=None, obs_std=None):
        z = np.asarray(z, dtype=np.float64).reshape(-1)
        if z.shape[0] != policy.cfg.z_dim:
            raise ContractError(f"z has {z.shape[0]} dims, policy expects {policy.cfg.z_dim}")
        if env.spec.obs_dim != policy.cfg.obs_dim or env.spec.act_dim != policy.cfg.act_dim:
            raise ContractError(f"environment {env.spec.name} does not match the policy's dimensions")
        self.policy, self.z, self.spec = policy, z, env.spec
        self.mean = np.zeros(env.spec.obs_dim) if obs_mean is None else np.asarray(obs_mean)
        self.std = np.ones(env.spec.obs_dim) if obs_std is None else np.asarray(obs_std)
        self.context = policy.cfg.context

    def act(self, obs_hist: np.ndarray, act_hist: np.ndarray) -> list:
        k = self.context
        obs = (obs_hist[:, -k:] - self.mean) / self.std
        act = act_hist[:, -k:]
        self.policy.eval()
        with T.no_grad():
            pred = self.policy(np.repeat(self.z[None], len(obs), axis=0), obs, act).data[:, -1].astype(np.float64)
        if self.spec.discrete:
            return [int(i) for i in np.argmax(pred, axis=1)]
        return list(np.clip(pred, self.spec.action_low, self.spec.action_high))


class ScriptedAgent:
    def __init__(self, env: Env):
        self.env = env

    def act(self, obs_hist, act_hist) -> list:
        return [self.env.scripted_action(self.env.decode(o)) for o in obs_hist[:, -1]]


class RandomAgent:
    def __init__(self, env: Env, seed: int = 0):
        self.spec = env.spec
        self.rng = np.random.default_rng([seed, 31])

    def act(self, obs_hist, act_hist) -> list:
        n = len(obs_hist)
        if self.spec.discrete:
            return [int(a) for a in self.rng.integers(self.spec.act_dim, size=n)]
        return list(self.rng.uniform(self.spec.action_low, self.spec.action_high, size=(n, self.spec.act_dim)))


# -- rollouts --------------------------------------------------------------------
def rollout_agent(agent, env: Env, episodes: int, seed: int, context: int = 0, normalize: bool = True) -> EvalReport:
    """Run ``episodes`` episodes in lockstep.  Each ends at the goal or the horizon cap."""
    if episodes < 1:
        raise ContractError("episodes must be >= 1")
    envs = [copy.deepcopy(env) for _ in range(episodes)]
    ss = np.random.SeedSequence([seed, 41])
    obs = np.stack([e.reset(seed=int(c.generate_state(1)[0])) for e, c in zip(envs, ss.spawn(episodes))])
    ad = env.spec.act_dim
    obs_hist = obs[:, None, :]
    act_hist = np.zeros((episodes, 1, ad))
    returns = np.zeros(episodes)
    success = np.zeros(episodes, dtype=bool)
    lengths = np.zeros(episodes, dtype=int)
    active = np.arange(episodes)
    t = 1
    while active.size and t <= env.spec.horizon:
        actions = agent.act(obs_hist[active], act_hist[active])
        new_obs = obs_hist[:, -1].copy()
        for i, a in zip(active, actions):
            o, done, r = envs[i].step(a)
            returns[i] += r
            lengths[i] += 1
            act_hist[i, -1] = envs[i].action_vector(envs[i]._coerce_action(a))
            new_obs[i] = o
            if done:
                success[i] = envs[i].is_goal(envs[i].state)
        obs_hist = np.concatenate([obs_hist, new_obs[:, None]], axis=1)
        act_hist = np.concatenate([act_hist, np.zeros((episodes, 1, ad))], axis=1)
        active = np.array([i for i in active if not envs[i].done], dtype=int)
        t += 1
    mean = float(returns.mean())
    score = normalized_score(mean, env) if normalize else None
    return EvalReport(episodes, mean, float(success.mean()), score, [float(r) for r in returns],
                      [bool(s) for s in success], seed, context, [int(n) for n in lengths])


def rollout_eval(policy: PolicyModel, z_star, env: Env, episodes: int, seed: int, obs_mean=None,
                 obs_std=None) -> EvalReport:
    z = z_star.value() if hasattr(z_star, "value") else z_star
    agent = ContextAgent(policy, z, env, obs_mean, obs_std)
    return rollout_agent(agent, env, episodes, seed, context=policy.cfg.context)


# -- reference returns and normalisation -------------------------------------------
def expert_reference(env: Env) -> float:
    """Exact mean return of the scripted expert over the uniform start distribution."""
    vals = []
    for s in env.start_states():
        e = copy.deepcopy(env)
        e.reset(start=s)
        total = 0.0
        while not e.done:
            _, _, r = e.step(e.scripted_action(e.state))
            total += r
        vals.append(total)
    return float(np.mean(vals))


def random_reference(env: Env, mc_episodes: int = 4000, seed: int = 12345) -> float:
    """Uniform-random policy return: exact dynamic programme on grids, Monte Carlo otherwise."""
    if isinstance(env, GridEnv):
        return _random_dp(env)
    rep = rollout_agent(RandomAgent(env, seed), env, mc_episodes, seed, normalize=False)
    return rep.mean_return


def _random_dp(env: GridEnv) -> float:
    from .envs import GOAL_REWARD, STEP_COST

    states = env.all_states()
    nxt = {s: [env.transition(s, a) for a in env.actions()] for s in states}
    value = {s: 0.0 for s in states}  # value with zero steps remaining
    for _ in range(env.spec.horizon):
        new = {}
        for s in states:
            if env.is_goal(s):
                new[s] = GOAL_REWARD
                continue
            tot = 0.0
            for s2 in nxt[s]:
                tot += GOAL_REWARD if env.is_goal(s2) else STEP_COST + value[s2]
            new[s] = tot / len(nxt[s])
        value = new
    return float(np.mean([value[s] for s in env.start_states()]))


@functools.lru_cache(maxsize=None)
def reference_returns(env_name: str) -> tuple:
    env = make_env(env_name)
    return random_reference(env), expert_reference(env)


def normalized_score(raw: float, env) -> float:
    name = env if isinstance(env, str) else env.spec.name
    lo, hi = reference_returns(name)
    if not hi > lo:
        raise ContractError(f"degenerate reference returns for {name}: expert {hi} <= random {lo}")
    return 100.0 * (raw - lo) / (hi - lo)


# -- experiments -----------------------------------------------------------------
@dataclass
class ExperimentConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    policy: dict = field(default_factory=dict)
    encoder: dict = field(default_factory=dict)
    eval_episodes: int = 50
    eval_seed: int = 1000


def bc_control(subopt, obs_dim: int, act_dim: int, cfg: TrainConfig, obs_mean, obs_std, steps: int,
               policy_kwargs=None) -> PolicyModel:
    """Same architecture as the ContextFormer policy, conditioned on a constant zero token."""
    pcfg = PolicyConfig(obs_dim, act_dim, context=cfg.context, **dict(policy_kwargs or {}))
    policy = PolicyModel(pcfg, cfg.seed)
    train_control(policy, subopt, cfg, obs_mean, obs_std, steps)
    return policy


def check_stitching_precondition(ds: Dataset) -> None:
    bad = stitching_violations(ds.make_env(), ds.suboptimal)
    if bad:
        raise ContractError(f"stitching precondition violated: {bad} sub-optimal episodes go from start to goal")


def stitching_experiment(ds: Dataset, xcfg: ExperimentConfig, metrics_path=None, log=None) -> dict:
    """Train ContextFormer and the zero-token control on the same data and budget; evaluate both."""
    check_stitching_precondition(ds)
    env = ds.make_env()
    tcfg = xcfg.train
    spec = env.spec
    mean, std = ds.manifest.obs_mean, ds.manifest.obs_std
    t0 = time.perf_counter()
    learner = build_learner(spec.obs_dim, spec.act_dim, tcfg, mean, std, xcfg.policy, xcfg.encoder)
    train(learner, ds.expert, ds.suboptimal, metrics_path, on_epoch=log)
    steps = tcfg.epochs * tcfg.groups_per_epoch
    t1 = time.perf_counter()
    control = bc_control(ds.suboptimal, spec.obs_dim, spec.act_dim, tcfg, mean, std, steps, xcfg.policy)
    t2 = time.perf_counter()
    cf = rollout_eval(learner.policy, learner.z_star, env, xcfg.eval_episodes, xcfg.eval_seed, mean, std)
    ctl = rollout_eval(control, np.zeros(control.cfg.z_dim), env, xcfg.eval_episodes, xcfg.eval_seed, mean, std)
    return {
        "env": ds.env_name,
        "conditioning": ds.manifest.conditioning,
        "demos": len(ds.expert),
        "suboptimal_episodes": len(ds.suboptimal),
        "stitching_violations": 0,
        "training_steps": {"contextformer": steps, "control": steps},
        "contextformer": cf.to_dict(),
        "control": ctl.to_dict(),
        "success_gap": cf.success_rate - ctl.success_rate,
        "score_gap": cf.normalized_score - ctl.normalized_score,
        "z_star": [float(v) for v in learner.z_star.value()],
        "seconds": {"contextformer_train": t1 - t0, "control_train": t2 - t1,
                    "eval": time.perf_counter() - t2},
        "_learner": learner,
    }


def demo_sweep(build, counts, xcfg: ExperimentConfig, log=None) -> list:
    """One stitching report per demo count; ``build(count)`` returns the dataset for that count."""
    reports = []
    for n in counts:
        rep = stitching_experiment(build(n), xcfg, log=log)
        rep.pop("_learner", None)
        reports.append(rep)
    return reports
