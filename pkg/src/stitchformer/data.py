"""Behaviour datasets built from segment plans, expert demos, and the JSON-lines file format.

A segment plan lists (source, target) routes that a noisy navigator follows.
No plan may contain a route that starts in the environment's start region and
ends at the goal, and every generated set is scanned to confirm that no
sub-optimal episode is start-to-goal complete.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .envs import FOURROOMS_DOORS, GOAL_REWARD, ChainStitch, Env, FourRooms, GridEnv, PointMass, make_env
from .errors import ContractError, CorruptionError, FormatError, GenerationError
from .trajectory import Trajectory

FORMAT_VERSION = 1


@dataclass
class Segment:
    name: str
    pairs: list  # routes (source, target) or (source, via, target); target None means a random walk
    weight: float = 1.0
    region: frozenset | None = None  # states the episode must stay inside (grid envs)


@dataclass
class SegmentPlan:
    segments: list
    behavior_noise: float = 0.1
    walk_length: tuple = (4, 12)

    def describe(self) -> list:
        return [{"name": s.name, "weight": s.weight, "routes": len(s.pairs)} for s in self.segments]


def _room_cells(env: FourRooms, room: str):
    return [s for s in env.all_states() if env.room(s) == room]


def default_plan(env: Env) -> SegmentPlan:
    """The stock segment plan for each environment.

    Goal-ward fragments (start room to a doorway, doorway to goal) are present
    but outnumbered by traffic toward other destinations, so imitating the
    sub-optimal data alone does not lead to the goal.
    """
    if isinstance(env, ChainStitch):
        left, right = range(0, 6), range(4, env.n)
        segs = []
        for name, cells in (("left-half", left), ("right-half", right)):
            region = frozenset(cells)
            up = [(s, t) for s in cells for t in cells if t > s]
            down = [(s, t) for s in cells for t in cells if t < s]
            segs.append(Segment(f"{name}:rightward", up, 1.0, region))
            segs.append(Segment(f"{name}:leftward", down, 2.0, region))
            segs.append(Segment(f"{name}:walk", [(s, None) for s in cells], 0.3, region))
        return SegmentPlan(segs, behavior_noise=0.1, walk_length=(3, 8))
    if isinstance(env, FourRooms):
        tl = _room_cells(env, "TL")
        doors = list(FOURROOMS_DOORS.values())
        corners = [(0, 0), (0, 10), (10, 0)]
        segs = [
            Segment("room1->doorway", [(s, d) for s in tl for d in (FOURROOMS_DOORS["east"], FOURROOMS_DOORS["south"])], 1.0),
            Segment("doorway->goal", [(d, env.goal) for d in doors], 1.0),
            Segment("doorway->corner", [(d, c) for d in doors for c in corners], 2.0),
            Segment("room->room-center", [(s, c) for s in env.all_states() for c in ((2, 2), (2, 8), (8, 2))
                                          if s != c and env.room(s) != "BR"], 1.0),
            Segment("walk", [(s, None) for s in env.all_states() if s not in env.start_states()], 0.3),
        ]
        return SegmentPlan(segs, behavior_noise=0.1, walk_length=(4, 12))
    if isinstance(env, PointMass):
        starts = env.start_states()
        w1, w2, w3 = env.waypoints
        segs = [
            Segment("start->waypoint", [(s, w1) for s in starts], 1.0),
            Segment("waypoint->goal", [(w3, env.goal)], 1.0),
            Segment("waypoint->corner", [(w1, (0.1, 0.9)), (w3, (0.9, 0.9)), (w2, (0.1, 0.9))], 2.0),
            Segment("walk", [((0.3, 0.5), None), ((0.7, 0.5), None), ((0.5, 0.9), None)], 0.3),
        ]
        return SegmentPlan(segs, behavior_noise=0.2, walk_length=(4, 12))
    raise ContractError(f"no default plan for {type(env).__name__}")


def _same_state(env: Env, a, b) -> bool:
    if isinstance(env, PointMass):
        return max(abs(a[0] - b[0]), abs(a[1] - b[1])) < 1e-9
    return a == b


def _arrived(env: Env, a, b) -> bool:
    if isinstance(env, PointMass):
        return max(abs(a[0] - b[0]), abs(a[1] - b[1])) <= 0.03
    return a == b


def validate_plan(env: Env, plan: SegmentPlan) -> None:
    """Reject plans whose routes could produce a complete start-to-goal episode."""
    if not plan.segments or all(s.weight <= 0 for s in plan.segments):
        raise GenerationError("segment plan has no positively weighted segment")
    starts = env.start_states()
    for seg in plan.segments:
        if not seg.pairs:
            raise GenerationError(f"segment {seg.name!r} has no routes")
        for route in seg.pairs:
            src, targets = route[0], [t for t in route[1:] if t is not None]
            if any(env.is_goal(t) for t in targets) and any(_same_state(env, src, s) for s in starts):
                raise GenerationError(f"segment {seg.name!r} routes a start state straight to the goal")
            if seg.region is not None and any(p not in seg.region for p in [src] + targets):
                raise GenerationError(f"segment {seg.name!r} has a route leaving its region")


def _grid_step(env: GridEnv, state, target, dist, region, rng, noise):
    acts = list(env.actions())
    if region is not None:
        acts = [a for a in acts if env.transition(state, a) in region]
    if target is None or rng.random() < noise:
        return acts[int(rng.integers(len(acts)))]
    best = min(dist.get(env.transition(state, a), 10 ** 9) for a in acts)
    greedy = [a for a in acts if dist.get(env.transition(state, a), 10 ** 9) == best]
    return greedy[int(rng.integers(len(greedy)))]


def _run_episode(env: Env, route, seg: Segment, plan: SegmentPlan, rng, dist_cache) -> Trajectory:
    src, targets = route[0], list(route[1:])
    obs, acts, rews = [], [], []
    env.reset(start=src)
    walk = targets == [None]
    cap = int(rng.integers(plan.walk_length[0], plan.walk_length[1] + 1)) if walk else env.spec.horizon
    region = seg.region
    while len(acts) < cap and not env.done:
        state = env.state
        while targets and targets[0] is not None and _arrived(env, state, targets[0]):
            targets.pop(0)
        if not targets:
            break
        dst = targets[0]
        if isinstance(env, GridEnv):
            key = (dst, region)
            if dst is not None and key not in dist_cache:
                dist_cache[key] = env.bfs_distances(dst) if region is None else _region_distances(env, dst, region)
            a = _grid_step(env, state, dst, dist_cache.get(key), region, rng, plan.behavior_noise)
        else:
            a = _point_step(env, state, dst, rng, plan.behavior_noise)
        obs.append(env.encode(state))
        acts.append(env.action_vector(a))
        _, _, r = env.step(a)
        rews.append(r)
    if not acts:
        return None
    meta = {"segment": seg.name, "source": _jsonable(src), "target": _jsonable(route[-1]),
            "policy": "noisy-navigator", "return": float(np.sum(rews))}
    if len(route) > 2:
        meta["via"] = [_jsonable(v) for v in route[1:-1]]
    return Trajectory(np.array(obs), np.array(acts), np.zeros(len(acts), dtype=bool), np.array(rews), meta)


def _region_distances(env: GridEnv, target, region):
    dist = {target: 0}
    frontier = [target]
    while frontier:
        nxt = []
        for cur in frontier:
            for s in region:
                if s in dist:
                    continue
                if any(env.transition(s, a) == cur for a in env.actions()):
                    dist[s] = dist[cur] + 1
                    nxt.append(s)
        frontier = nxt
    return dist


def _point_step(env: PointMass, state, target, rng, noise):
    if target is None:
        return rng.uniform(-0.1, 0.1, size=2)
    a = np.clip(np.array([target[0] - state[0], target[1] - state[1]]), -0.1, 0.1)
    return np.clip(a + rng.normal(0.0, noise * 0.1, size=2), -0.1, 0.1)


def _jsonable(x):
    if x is None:
        return None
    if isinstance(x, tuple):
        return [_jsonable(v) for v in x]
    return x.item() if hasattr(x, "item") else x


def is_start_to_goal(env: Env, traj: Trajectory) -> bool:
    """Judged from the data itself: first observation in the start region and a goal reward."""
    first = env.decode(traj.observations[0])
    starts_in_region = any(_same_state(env, first, s) for s in env.start_states())
    reached = traj.rewards is not None and bool(np.any(traj.rewards >= GOAL_REWARD))
    return starts_in_region and reached


def generate_behavior_dataset(env: Env, plan: SegmentPlan | None, episodes: int, seed: int) -> list:
    if episodes < 1:
        raise ContractError("episodes must be >= 1")
    plan = plan or default_plan(env)
    validate_plan(env, plan)
    rng = np.random.default_rng([seed, 11])
    weights = np.array([max(s.weight, 0.0) for s in plan.segments])
    weights = weights / weights.sum()
    out, attempts, cache = [], 0, {}
    while len(out) < episodes:
        attempts += 1
        if attempts > 20 * episodes + 100:
            raise GenerationError(f"could only generate {len(out)} of {episodes} valid episodes")
        seg = plan.segments[int(rng.choice(len(plan.segments), p=weights))]
        route = seg.pairs[int(rng.integers(len(seg.pairs)))]
        traj = _run_episode(env, route, seg, plan, rng, cache)
        if traj is None or is_start_to_goal(env, traj):
            continue
        traj.meta["seed"] = seed
        out.append(traj)
    return out


def generate_expert_demos(env: Env, count: int, seed: int, observation_only: bool = False) -> list:
    if count < 1:
        raise ContractError("count must be >= 1")
    rng = np.random.default_rng([seed, 12])
    demos = []
    for i in range(count):
        env.reset(seed=int(rng.integers(2 ** 31)))
        start = env.state
        obs, acts, rews = [], [], []
        while not env.done:
            a = env.scripted_action(env.state)
            obs.append(env.encode(env.state))
            acts.append(env.action_vector(a))
            _, _, r = env.step(a)
            rews.append(r)
        traj = Trajectory(np.array(obs), np.array(acts), np.zeros(len(acts), dtype=bool), np.array(rews),
                          {"policy": "scripted-expert", "source": _jsonable(start), "seed": seed,
                           "index": i, "return": float(np.sum(rews))})
        demos.append(traj.mask_actions() if observation_only else traj)
    return demos


def observation_stats(trajs) -> tuple:
    """Per-dimension mean and (population) std; constant dimensions get std 1."""
    allobs = np.concatenate([t.observations for t in trajs], axis=0)
    mean = allobs.mean(axis=0)
    std = allobs.std(axis=0)
    std = np.where(std > 1e-12, std, 1.0)
    return mean, std


# -- persistence ----------------------------------------------------------------
@dataclass
class DatasetManifest:
    format_version: int
    env: str
    env_spec: dict
    obs_mean: np.ndarray
    obs_std: np.ndarray
    n_suboptimal: int
    n_expert: int
    content_hash: str
    precision: str
    conditioning: str
    seed: int
    plan: list = field(default_factory=list)
    precision_note: str | None = None

    def to_json(self) -> dict:
        return {
            "format_version": self.format_version, "env": self.env, "env_spec": self.env_spec,
            "obs_mean": [repr(float(v)) for v in self.obs_mean],
            "obs_std": [repr(float(v)) for v in self.obs_std],
            "n_suboptimal": self.n_suboptimal, "n_expert": self.n_expert,
            "content_hash": self.content_hash, "precision": self.precision,
            "conditioning": self.conditioning, "seed": self.seed, "plan": self.plan,
        }

    @classmethod
    def from_json(cls, d: dict) -> "DatasetManifest":
        return cls(d["format_version"], d["env"], d["env_spec"],
                   np.array([float(v) for v in d["obs_mean"]]), np.array([float(v) for v in d["obs_std"]]),
                   d["n_suboptimal"], d["n_expert"], d["content_hash"], d["precision"],
                   d["conditioning"], d["seed"], d.get("plan", []))


@dataclass
class Dataset:
    manifest: DatasetManifest
    suboptimal: list
    expert: list

    @property
    def env_name(self) -> str:
        return self.manifest.env

    def make_env(self) -> Env:
        return make_env(self.manifest.env)

    def normalize(self, obs: np.ndarray) -> np.ndarray:
        return (obs - self.manifest.obs_mean) / self.manifest.obs_std


def build_dataset(env_name: str, episodes: int, demos: int, seed: int, conditioning: str = "LfD",
                  plan: SegmentPlan | None = None) -> Dataset:
    if conditioning not in ("LfD", "LfO"):
        raise ContractError(f"conditioning must be LfD or LfO, got {conditioning!r}")
    env = make_env(env_name)
    plan = plan or default_plan(env)
    sub = generate_behavior_dataset(env, plan, episodes, seed)
    exp = generate_expert_demos(env, demos, seed, observation_only=(conditioning == "LfO"))
    mean, std = observation_stats(sub)
    manifest = DatasetManifest(FORMAT_VERSION, env_name, env.spec.to_dict(), mean, std, len(sub), len(exp),
                               "", T.get_precision(), conditioning, seed, plan.describe())
    manifest.content_hash = content_hash(_payload_lines(sub, exp))
    return Dataset(manifest, sub, exp)


def _num(x) -> str:
    return repr(float(x))


def _episode_line(split: str, t: Trajectory) -> str:
    rec = {
        "split": split,
        "obs": [[_num(v) for v in row] for row in t.observations],
        "act": [[_num(v) for v in row] for row in t.actions],
        "mask": [int(m) for m in t.action_masked],
        "rew": None if t.rewards is None else [_num(v) for v in t.rewards],
        "meta": t.meta,
    }
    return json.dumps(rec, sort_keys=True, separators=(",", ":"))


def _payload_lines(sub, exp) -> list:
    return [_episode_line("suboptimal", t) for t in sub] + [_episode_line("expert", t) for t in exp]


def content_hash(lines) -> str:
    h = hashlib.sha256()
    for line in lines:
        h.update(line.encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


def save_dataset(path, ds: Dataset) -> str:
    lines = _payload_lines(ds.suboptimal, ds.expert)
    ds.manifest.content_hash = content_hash(lines)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(ds.manifest.to_json(), sort_keys=True) + "\n")
        for line in lines:
            fh.write(line + "\n")
    return ds.manifest.content_hash


def load_dataset(path) -> Dataset:
    text = Path(path).read_text(encoding="utf-8")
    if not text.endswith("\n"):
        raise CorruptionError(f"{path}: truncated (missing final newline)")
    lines = text[:-1].split("\n")
    try:
        head = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise CorruptionError(f"{path}: unreadable manifest ({exc})") from None
    version = head.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported dataset format version {version!r}")
    payload = lines[1:]
    if content_hash(payload) != head.get("content_hash"):
        raise CorruptionError(f"{path}: content hash mismatch")
    manifest = DatasetManifest.from_json(head)
    sub, exp = [], []
    for line in payload:
        rec = json.loads(line)
        t = Trajectory(np.array([[float(v) for v in row] for row in rec["obs"]]),
                       np.array([[float(v) for v in row] for row in rec["act"]]),
                       np.array(rec["mask"], dtype=bool),
                       None if rec["rew"] is None else np.array([float(v) for v in rec["rew"]]),
                       rec["meta"])
        (sub if rec["split"] == "suboptimal" else exp).append(t)
    if len(sub) != manifest.n_suboptimal or len(exp) != manifest.n_expert:
        raise CorruptionError(f"{path}: episode counts disagree with manifest")
    session = T.get_precision()
    if session != manifest.precision:
        manifest.precision_note = (f"written in {manifest.precision}, loaded into a {session} session; "
                                   f"values are rounded to {session} when converted to tensors")
    return Dataset(manifest, sub, exp)


def stitching_violations(env: Env, trajs) -> int:
    return sum(is_start_to_goal(env, t) for t in trajs)
