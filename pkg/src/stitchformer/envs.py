"""Deterministic toy environments whose optimal behaviour needs stitching.

All three share the same reward: ``STEP_COST`` per ordinary step and
``GOAL_REWARD`` for the step that enters (or acts from) the goal.  Rewards are
used for scoring only and never reach the learner.
"""

from __future__ import annotations

from collections import deque
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ContractError

STEP_COST = -0.01
GOAL_REWARD = 1.0


@dataclass(frozen=True)
class EnvSpec:
    name: str
    obs_dim: int
    act_dim: int
    action_kind: str  # "discrete-onehot" or "continuous-box"
    horizon: int
    goal: str
    reward: str
    action_low: float = -1.0
    action_high: float = 1.0

    def __post_init__(self):
        if self.horizon < 1 or self.obs_dim < 1 or self.act_dim < 1:
            raise ContractError("horizon and dimensions must be >= 1")
        if self.action_kind not in ("discrete-onehot", "continuous-box"):
            raise ContractError(f"unknown action kind {self.action_kind!r}")

    @property
    def discrete(self) -> bool:
        return self.action_kind == "discrete-onehot"

    def to_dict(self) -> dict:
        return asdict(self)


class Env:
    spec: EnvSpec

    def __init__(self):
        self.state = None
        self.t = 0
        self.done = True

    # subclasses implement: start_states, goal_state, encode, transition, is_goal
    def reset(self, seed=None, start=None):
        if start is None:
            rng = np.random.default_rng(seed)
            starts = self.start_states()
            start = starts[int(rng.integers(len(starts)))]
        self.state = start
        self.t = 0
        self.done = False
        return self.encode(start)

    def step(self, action):
        if self.done:
            raise ContractError("step() called on a finished episode; call reset() first")
        action = self._coerce_action(action)
        if self.is_goal(self.state):
            nxt, reward, at_goal = self.state, GOAL_REWARD, True
        else:
            nxt = self.transition(self.state, action)
            at_goal = self.is_goal(nxt)
            reward = GOAL_REWARD if at_goal else STEP_COST
        self.state = nxt
        self.t += 1
        self.done = at_goal or self.t >= self.spec.horizon
        return self.encode(nxt), self.done, reward

    def _coerce_action(self, action):
        if self.spec.discrete:
            if np.ndim(action) == 0:
                a = int(action)
            else:
                vec = np.asarray(action, dtype=np.float64).reshape(-1)
                if vec.shape[0] != self.spec.act_dim:
                    raise ContractError(f"action vector has {vec.shape[0]} dims, expected {self.spec.act_dim}")
                a = int(np.argmax(vec))
            if not 0 <= a < self.spec.act_dim:
                raise ContractError(f"action index {a} out of range")
            return a
        vec = np.asarray(action, dtype=np.float64).reshape(-1)
        if vec.shape[0] != self.spec.act_dim:
            raise ContractError(f"action has {vec.shape[0]} dims, expected {self.spec.act_dim}")
        return np.clip(vec, self.spec.action_low, self.spec.action_high)

    def action_vector(self, action) -> np.ndarray:
        """The vector stored in datasets for an environment action."""
        if self.spec.discrete:
            v = np.zeros(self.spec.act_dim)
            v[int(action)] = 1.0
            return v
        return np.clip(np.asarray(action, dtype=np.float64), self.spec.action_low, self.spec.action_high)


class GridEnv(Env):
    """Shared machinery for the discrete environments."""

    def actions(self):
        return range(self.spec.act_dim)

    def bfs_distances(self, target) -> dict:
        """Steps-to-target for every state that can reach it (reverse BFS)."""
        preds: dict = {}
        for s in self.all_states():
            for a in self.actions():
                preds.setdefault(self.transition(s, a), set()).add(s)
        dist = {target: 0}
        queue = deque([target])
        while queue:
            cur = queue.popleft()
            for p in preds.get(cur, ()):
                if p not in dist:
                    dist[p] = dist[cur] + 1
                    queue.append(p)
        return dist

    def optimal_return(self, start) -> float:
        """Best achievable return from ``start`` (BFS over the transition graph)."""
        d = self.bfs_distances(self.goal_state()).get(start)
        if d is None or d > self.spec.horizon:
            return STEP_COST * self.spec.horizon
        return STEP_COST * (d - 1) + GOAL_REWARD


class ChainStitch(GridEnv):
    """A line of ``n`` cells; actions 0 = left, 1 = right; goal at the right end."""

    def __init__(self, n: int = 10, horizon: int = 30, start_cells=(0, 1, 2)):
        super().__init__()
        self.n = n
        self._starts = list(start_cells)
        self.spec = EnvSpec("chain", n, 2, "discrete-onehot", horizon,
                            goal=f"reach cell {n - 1}",
                            reward=f"{STEP_COST} per step, {GOAL_REWARD} on reaching the goal")

    def all_states(self):
        return list(range(self.n))

    def start_states(self):
        return list(self._starts)

    def goal_state(self):
        return self.n - 1

    def is_goal(self, s) -> bool:
        return s == self.n - 1

    def encode(self, s) -> np.ndarray:
        v = np.zeros(self.n)
        v[s] = 1.0
        return v

    def decode(self, obs) -> int:
        return int(np.argmax(obs))

    def transition(self, s, a):
        return max(0, s - 1) if a == 0 else min(self.n - 1, s + 1)

    def scripted_action(self, s) -> int:
        return 1


FOURROOMS_WALLS = (
    [(r, 5) for r in range(11) if r not in (2, 8)]
    + [(5, c) for c in range(11) if c not in (2, 8, 5)]
)
# (row, col) of the four doorways: east, south, southeast-upper, southeast-left
FOURROOMS_DOORS = {"east": (2, 5), "south": (5, 2), "tr_down": (5, 8), "bl_right": (8, 5)}
_MOVES = {0: (-1, 0), 1: (1, 0), 2: (0, -1), 3: (0, 1)}  # up, down, left, right


class FourRooms(GridEnv):
    """11x11 grid split into four rooms by a wall cross with four doorways.

    Observation: one-hot row followed by one-hot column (22 dims).
    Actions: 0 up, 1 down, 2 left, 3 right; moves into walls leave the agent in place.
    """

    size = 11

    def __init__(self, horizon: int = 60, start_cells=((0, 0), (0, 1), (1, 0), (1, 1)), goal=(10, 10)):
        super().__init__()
        self.walls = frozenset(FOURROOMS_WALLS)
        self._starts = [tuple(s) for s in start_cells]
        self.goal = tuple(goal)
        self.spec = EnvSpec("fourrooms", 2 * self.size, 4, "discrete-onehot", horizon,
                            goal=f"reach cell {self.goal}",
                            reward=f"{STEP_COST} per step, {GOAL_REWARD} on reaching the goal")

    def all_states(self):
        return [(r, c) for r in range(self.size) for c in range(self.size) if (r, c) not in self.walls]

    def start_states(self):
        return list(self._starts)

    def goal_state(self):
        return self.goal

    def is_goal(self, s) -> bool:
        return s == self.goal

    def encode(self, s) -> np.ndarray:
        v = np.zeros(2 * self.size)
        v[s[0]] = 1.0
        v[self.size + s[1]] = 1.0
        return v

    def decode(self, obs):
        return int(np.argmax(obs[:self.size])), int(np.argmax(obs[self.size:]))

    def transition(self, s, a):
        dr, dc = _MOVES[int(a)]
        r, c = s[0] + dr, s[1] + dc
        if not (0 <= r < self.size and 0 <= c < self.size) or (r, c) in self.walls:
            return s
        return (r, c)

    def room(self, s) -> str:
        r, c = s
        if (r, c) in FOURROOMS_DOORS.values():
            return "door"
        return ("T" if r < 5 else "B") + ("L" if c < 5 else "R")

    # The hand-written route through the east door; each waypoint is reached by
    # fixing the column first, then the row, which never crosses a wall here.
    route = [(2, 4), (2, 5), (2, 6), (4, 8), (5, 8), (6, 8), (10, 10)]

    def scripted_action(self, s) -> int:
        for wp in self._route_from(s):
            if wp != s:
                break
        r, c = s
        if c < wp[1]:
            return 3
        if c > wp[1]:
            return 2
        return 1 if r < wp[0] else 0

    def _route_from(self, s):
        room = self.room(s)
        if room == "TL" or s in ((2, 5),):
            start = 0 if room == "TL" else 1
        elif room == "TR" or s == (5, 8):
            start = 3 if room == "TR" else 4
        else:
            start = 6
        return self.route[start:]


class PointMass(Env):
    """Continuous point in the unit square with a wall the agent must go around.

    Actions are velocities clipped to [-0.1, 0.1]^2.  A move whose segment touches
    the wall rectangle or leaves the square is blocked (the agent stays put).
    """

    # edges sit off the 0.05 grid so lattice moves never graze a corner
    wall = (0.43, 0.0, 0.57, 0.72)  # xmin, ymin, xmax, ymax (closed)
    goal_tol = 0.05
    waypoints = [(0.4, 0.7), (0.5, 0.8), (0.6, 0.7)]

    def __init__(self, horizon: int = 60, start_points=((0.1, 0.1), (0.2, 0.1), (0.1, 0.2), (0.2, 0.2)),
                 goal=(0.9, 0.1)):
        super().__init__()
        self._starts = [tuple(map(float, p)) for p in start_points]
        self.goal = tuple(map(float, goal))
        self.spec = EnvSpec("pointmass", 2, 2, "continuous-box", horizon,
                            goal=f"within {self.goal_tol} (max-norm) of {self.goal}",
                            reward=f"{STEP_COST} per step, {GOAL_REWARD} on reaching the goal",
                            action_low=-0.1, action_high=0.1)

    def start_states(self):
        return list(self._starts)

    def goal_state(self):
        return self.goal

    def is_goal(self, s) -> bool:
        return max(abs(s[0] - self.goal[0]), abs(s[1] - self.goal[1])) <= self.goal_tol + 1e-9

    def encode(self, s) -> np.ndarray:
        return np.array(s, dtype=np.float64)

    def decode(self, obs):
        return float(obs[0]), float(obs[1])

    def blocked(self, p, q) -> bool:
        if not (0.0 <= q[0] <= 1.0 and 0.0 <= q[1] <= 1.0):
            return True
        return segment_hits_box(p, q, self.wall)

    def transition(self, s, a):
        q = (s[0] + float(a[0]), s[1] + float(a[1]))
        return s if self.blocked(s, q) else q

    def scripted_action(self, s) -> np.ndarray:
        wp = self.goal
        # waypoints are passed left to right; a waypoint is behind us once we stand
        # on it or are strictly to its right
        for w in self.waypoints:
            on_it = max(abs(s[0] - w[0]), abs(s[1] - w[1])) < 1e-9
            if not (on_it or s[0] > w[0] + 1e-9):
                wp = w
                break
        return np.clip(np.array([wp[0] - s[0], wp[1] - s[1]]), -0.1, 0.1)

    def optimal_return(self, start) -> float:
        d = lattice_shortest_steps(self, start)
        if d is None or d > self.spec.horizon:
            return STEP_COST * self.spec.horizon
        return STEP_COST * (d - 1) + GOAL_REWARD


def segment_hits_box(p, q, box) -> bool:
    """Liang-Barsky clip of segment p->q against a closed axis-aligned box."""
    xmin, ymin, xmax, ymax = box
    dx, dy = q[0] - p[0], q[1] - p[1]
    t0, t1 = 0.0, 1.0
    for pk, qk in ((-dx, p[0] - xmin), (dx, xmax - p[0]), (-dy, p[1] - ymin), (dy, ymax - p[1])):
        if pk == 0.0:
            if qk < 0.0:
                return False
            continue
        r = qk / pk
        if pk < 0.0:
            t0 = max(t0, r)
        else:
            t1 = min(t1, r)
        if t0 > t1:
            return False
    return True


def lattice_shortest_steps(env: PointMass, start, step: float = 0.1):
    """Fewest moves from ``start`` to the goal using only king moves of size ``step``.

    Positions are kept as integer lattice offsets so no rounding accumulates.
    """
    origin = start
    moves = [(i, j) for i in (-1, 0, 1) for j in (-1, 0, 1) if (i, j) != (0, 0)]

    def pos(ij):
        return (origin[0] + ij[0] * step, origin[1] + ij[1] * step)

    seen = {(0, 0): 0}
    queue = deque([(0, 0)])
    while queue:
        cur = queue.popleft()
        p = pos(cur)
        if env.is_goal(p):
            return seen[cur]
        for m in moves:
            nxt = (cur[0] + m[0], cur[1] + m[1])
            if nxt in seen:
                continue
            q = pos(nxt)
            if env.blocked(p, q):
                continue
            seen[nxt] = seen[cur] + 1
            queue.append(nxt)
    return None


ENVIRONMENTS = {"chain": ChainStitch, "fourrooms": FourRooms, "pointmass": PointMass}


def make_env(name: str) -> Env:
    try:
        return ENVIRONMENTS[name]()
    except KeyError:
        raise ContractError(f"unknown environment {name!r}; choose from {sorted(ENVIRONMENTS)}") from None
