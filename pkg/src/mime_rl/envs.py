"""Benchmark environments: a wrap-around 2D plane, a two-plane wormhole, and a
gridworld of rooms with a noisy TV.

Every environment is vectorized over ``num_envs`` independent copies and steps
them together. When a copy finishes an episode it is reset in place; ``step``
still returns the true terminal observation so intrinsic rewards that look at
``s_next`` see the real transition.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

PLANE = "plane"
WORMHOLE = "wormhole"
ROOMS = "rooms"
ENV_NAMES = (PLANE, WORMHOLE, ROOMS)

UPPER_Z = 1000.0


@dataclass(frozen=True)
class EnvSpec:
    name: str
    observation_dim: int
    action_dim: int
    action_kind: str  # "continuous-box" | "discrete"
    action_bound_kind: str = "per-axis"  # "per-axis" | "norm"
    action_bound: float = 0.0

    @property
    def discrete(self) -> bool:
        return self.action_kind == "discrete"


PLANE_SPEC = EnvSpec(PLANE, 2, 2, "continuous-box", "per-axis", 0.01)
WORMHOLE_SPEC = EnvSpec(WORMHOLE, 3, 2, "continuous-box", "norm", 0.01)


def clamp_action(spec: EnvSpec, raw_action) -> np.ndarray:
    """Project a raw continuous action (or batch) onto the admissible set."""
    a = np.asarray(raw_action, dtype=np.float64)
    if a.shape[-1:] != (spec.action_dim,):
        raise ValueError(f"action shape {a.shape} does not match action_dim {spec.action_dim}")
    bound = spec.action_bound
    if spec.action_bound_kind == "per-axis":
        return np.clip(a, -bound, bound)
    norm = np.linalg.norm(a, axis=-1, keepdims=True)
    scale = np.where(norm > bound, bound / np.maximum(norm, 1e-300), 1.0)
    return a * scale


def wrap(p: np.ndarray, half_width: float) -> np.ndarray:
    """Map coordinates into the periodic square [-half_width, half_width)."""
    return np.mod(p + half_width, 2.0 * half_width) - half_width


def segment_circle_crossings(p0: np.ndarray, p1: np.ndarray, radius: float) -> np.ndarray:
    """How many times the straight move p0 -> p1 crosses the circle |p| = radius.

    Points with |p| < radius are inside; the circle itself counts as outside,
    so the crossing parity always equals the inside/outside change of the endpoints.
    """
    p0 = np.atleast_2d(p0)
    d = np.atleast_2d(p1) - p0
    a = np.sum(d * d, axis=-1)
    b = 2.0 * np.sum(p0 * d, axis=-1)
    c = np.sum(p0 * p0, axis=-1) - radius * radius
    disc = b * b - 4.0 * a * c
    out = np.zeros(p0.shape[0], dtype=np.int64)
    ok = (a > 0) & (disc > 0)
    if np.any(ok):
        sq = np.sqrt(disc[ok])
        t1 = (-b[ok] - sq) / (2.0 * a[ok])
        t2 = (-b[ok] + sq) / (2.0 * a[ok])
        out[ok] = ((t1 >= 0) & (t1 < 1)).astype(np.int64) + ((t2 > 0) & (t2 <= 1)).astype(np.int64)
    return out


class VectorEnv:
    spec: EnvSpec

    def __init__(self, num_envs: int, max_steps: int, seed: int | None):
        if num_envs < 1:
            raise ValueError("num_envs must be positive")
        self.num_envs = num_envs
        self.max_steps = max_steps
        self.t = np.zeros(num_envs, dtype=np.int64)
        self.last_info: dict = {}
        self.seed(seed)

    def seed(self, seed: int | None) -> None:
        children = np.random.SeedSequence(seed).spawn(self.num_envs)
        self.rngs = [np.random.default_rng(s) for s in children]

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self.seed(seed)
        self.t[:] = 0
        self._reset_idx(np.arange(self.num_envs))
        return self.observe()

    def step(self, actions) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Advance every copy; returns ``(next_obs, reward, done)``, auto-resetting finished copies."""
        actions = self._check_actions(actions)
        reward, terminal = self._advance(actions)
        next_obs = self.observe()
        self.last_info = self._info()
        self.t += 1
        done = terminal | (self.t >= self.max_steps)
        idx = np.flatnonzero(done)
        if idx.size:
            self.t[idx] = 0
            self._reset_idx(idx)
        return next_obs, reward, done

    def _check_actions(self, actions):
        a = np.asarray(actions, dtype=np.float64)
        if a.shape != (self.num_envs, self.spec.action_dim):
            raise ValueError(f"actions shape {a.shape}, expected {(self.num_envs, self.spec.action_dim)}")
        return clamp_action(self.spec, a)

    def observe(self) -> np.ndarray:
        raise NotImplementedError

    def positions(self) -> np.ndarray:
        """(x, y) per copy, for visitation statistics."""
        raise NotImplementedError

    def _info(self) -> dict:
        return {"pos": self.positions()}

    def _reset_idx(self, idx: np.ndarray) -> None:
        raise NotImplementedError

    def _advance(self, actions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError


# --- 2D plane ---------------------------------------------------------------


@dataclass
class PlaneState:
    x: float = 0.0
    y: float = 0.0


def _plane_kernel(pos, action, half_width, goal, goal_radius):
    new = wrap(pos + action, half_width)
    hit = np.linalg.norm(new - goal, axis=-1) <= goal_radius
    return new, hit


class PlaneEnv(VectorEnv):
    """Wrap-around square with one rewarding disc; every copy starts at the origin."""

    spec = PLANE_SPEC

    def __init__(
        self,
        num_envs: int = 1,
        seed: int | None = None,
        half_width: float = 2.0,
        goal: Sequence[float] = (1.0, 1.0),
        goal_radius: float = 0.05,
        max_steps: int = 500,
    ):
        self.half_width = half_width
        self.goal = np.asarray(goal, dtype=np.float64)
        self.goal_radius = goal_radius
        self.pos = np.zeros((num_envs, 2))
        super().__init__(num_envs, max_steps, seed)

    def observe(self):
        return self.pos.copy()

    def positions(self):
        return self.pos.copy()

    def _reset_idx(self, idx):
        self.pos[idx] = 0.0

    def _advance(self, actions):
        self.pos, hit = _plane_kernel(self.pos, actions, self.half_width, self.goal, self.goal_radius)
        return hit.astype(np.float64), hit


def plane_step(state: PlaneState, action, half_width=2.0, goal=(1.0, 1.0), goal_radius=0.05):
    """Single-state 2D plane transition. Mutates ``state``; returns ``(obs, reward, done)``."""
    a = clamp_action(PLANE_SPEC, action)
    new, hit = _plane_kernel(
        np.array([[state.x, state.y]]), a[None, :], half_width, np.asarray(goal, float), goal_radius
    )
    state.x, state.y = float(new[0, 0]), float(new[0, 1])
    return new[0].copy(), float(hit[0]), bool(hit[0])


# --- wormhole ---------------------------------------------------------------


@dataclass
class WormholeState:
    x: float = 0.0
    y: float = 0.0
    lower: bool = True

    def observation(self) -> np.ndarray:
        return np.array([self.x, self.y, 0.0 if self.lower else UPPER_Z])


def _wormhole_kernel(pos, lower, action, radius, half_width):
    new = pos + action
    crossings = segment_circle_crossings(pos, new, radius)
    lower = lower ^ (crossings % 2 == 1)
    # only the upper plane is bounded by the square
    new = np.where(lower[:, None], new, wrap(new, half_width))
    return new, lower, crossings


class WormholeEnv(VectorEnv):
    """A disc (z=0) of given radius inside a periodic square (z=1000).

    Crossing the circle in either direction switches plane. No extrinsic reward.
    """

    spec = WORMHOLE_SPEC

    def __init__(
        self,
        num_envs: int = 1,
        seed: int | None = None,
        radius: float = 0.5,
        half_width: float = 2.0,
        max_steps: int = 500,
    ):
        self.radius = radius
        self.half_width = half_width
        self.pos = np.zeros((num_envs, 2))
        self.lower = np.ones(num_envs, dtype=bool)
        self.crossings = np.zeros(num_envs, dtype=np.int64)
        super().__init__(num_envs, max_steps, seed)

    def observe(self):
        z = np.where(self.lower, 0.0, UPPER_Z)
        return np.column_stack([self.pos, z])

    def positions(self):
        return self.pos.copy()

    def _reset_idx(self, idx):
        self.pos[idx] = 0.0
        self.lower[idx] = True

    def _advance(self, actions):
        self.pos, self.lower, self.crossings = _wormhole_kernel(
            self.pos, self.lower, actions, self.radius, self.half_width
        )
        return np.zeros(self.num_envs), np.zeros(self.num_envs, dtype=bool)


def wormhole_step(state: WormholeState, action, radius=0.5, half_width=2.0):
    """Single-state wormhole transition. Mutates ``state``; returns ``(obs, reward, done)``.

    Episodes only end at the step cap, which is the vector env's business.
    """
    a = clamp_action(WORMHOLE_SPEC, action)
    new, lower, _ = _wormhole_kernel(
        np.array([[state.x, state.y]]), np.array([state.lower]), a[None, :], radius, half_width
    )
    state.x, state.y, state.lower = float(new[0, 0]), float(new[0, 1]), bool(lower[0])
    return state.observation(), 0.0, False


# --- rooms with a noisy TV --------------------------------------------------

UP, DOWN, LEFT, RIGHT = range(4)
_MOVES = {UP: (-1, 0), DOWN: (1, 0), LEFT: (0, -1), RIGHT: (0, 1)}


@dataclass(frozen=True)
class RoomsLayout:
    """A corridor, then ``num_rooms`` square rooms in a row, linked by doors.

    corridor(dead end) | room 0 (start) | room 1 (TV) | ... | room n-1 (goal)
    """

    room_size: int = 8
    num_rooms: int = 4
    corridor_rows: int = 2
    door_rows: tuple[int, ...] = (3, 4)
    tv_room: int = 1
    start_room: int = 0
    start_cell: tuple[int, int] = (3, 3)
    goal_cell: tuple[int, int] = (3, 6)

    @property
    def corridor(self) -> int:
        return self.num_rooms

    @property
    def goal_room(self) -> int:
        return self.num_rooms - 1

    @property
    def num_room_ids(self) -> int:
        return self.num_rooms + 1

    def rows(self, room: int) -> int:
        return self.corridor_rows if room == self.corridor else self.room_size

    def cols(self, room: int) -> int:
        return self.room_size

    @property
    def observation_dim(self) -> int:
        return self.num_room_ids + 3

    def cells(self) -> list[tuple[int, int, int]]:
        return [
            (room, r, c)
            for room in range(self.num_room_ids)
            for r in range(self.rows(room))
            for c in range(self.cols(room))
        ]

    def move(self, room: int, r: int, c: int, action: int) -> tuple[int, int, int]:
        dr, dc = _MOVES[action]
        nr, nc = r + dr, c + dc
        if 0 <= nr < self.rows(room) and 0 <= nc < self.cols(room):
            return room, nr, nc
        if dr != 0:
            return room, r, c
        door_off = self.door_rows[0]
        if room == self.corridor:
            if dc > 0:
                return self.start_room, r + door_off, 0
            return room, r, c
        if r not in self.door_rows:
            return room, r, c
        if dc > 0 and room + 1 < self.num_rooms:
            return room + 1, r, 0
        if dc < 0 and room > 0:
            return room - 1, r, self.cols(room - 1) - 1
        if dc < 0 and room == self.start_room == 0 and r - door_off < self.corridor_rows:
            return self.corridor, r - door_off, self.cols(self.corridor) - 1
        return room, r, c


def rooms_spec(layout: RoomsLayout | None = None) -> EnvSpec:
    layout = layout or RoomsLayout()
    return EnvSpec(ROOMS, layout.observation_dim, 4, "discrete", "per-axis", 0.0)


@dataclass
class RoomsState:
    room_id: int
    cell: tuple[int, int]
    tv_phase: float = 0.0


def _rooms_observation(layout: RoomsLayout, room: int, r: int, c: int, tv: float) -> np.ndarray:
    obs = np.zeros(layout.observation_dim)
    obs[room] = 1.0
    obs[layout.num_room_ids] = r / max(layout.rows(room) - 1, 1)
    obs[layout.num_room_ids + 1] = c / max(layout.cols(room) - 1, 1)
    obs[-1] = tv
    return obs


def rooms_step(state: RoomsState, action: int, rng: np.random.Generator, layout: RoomsLayout | None = None):
    """Single-state rooms transition. Mutates ``state``; returns ``(obs, reward, done)``."""
    layout = layout or RoomsLayout()
    if action not in _MOVES:
        raise ValueError(f"unknown action {action}")
    room, r, c = layout.move(state.room_id, *state.cell, int(action))
    state.room_id, state.cell = room, (r, c)
    state.tv_phase = float(rng.random()) if room == layout.tv_room else 0.0
    hit = room == layout.goal_room and (r, c) == layout.goal_cell
    return _rooms_observation(layout, room, r, c, state.tv_phase), float(hit), hit


class RoomsEnv(VectorEnv):
    """Gridworld analog of a maze with a TV: the TV room's last observation slot is fresh noise every step.

    Actions are integers (up, down, left, right) passed as an (n, 1) array or (n,) vector.
    """

    def __init__(
        self,
        num_envs: int = 1,
        seed: int | None = None,
        layout: RoomsLayout | None = None,
        random_start: bool = False,
        max_steps: int = 500,
    ):
        self.layout = layout or RoomsLayout()
        self.spec = rooms_spec(self.layout)
        self.random_start = random_start
        cells = self.layout.cells()
        self._cells = cells
        index = {cell: i for i, cell in enumerate(cells)}
        self._next = np.array([[index[self.layout.move(*cell, a)] for a in range(4)] for cell in cells])
        self._obs_table = np.array([_rooms_observation(self.layout, *cell, 0.0) for cell in cells])
        self._room_of = np.array([cell[0] for cell in cells])
        self._start = index[(self.layout.start_room, *self.layout.start_cell)]
        self._goal = index[(self.layout.goal_room, *self.layout.goal_cell)]
        self.cell = np.zeros(num_envs, dtype=np.int64)
        self.tv = np.zeros(num_envs)
        super().__init__(num_envs, max_steps, seed)

    def _check_actions(self, actions):
        a = np.asarray(actions).reshape(-1)
        if a.shape != (self.num_envs,):
            raise ValueError(f"expected {self.num_envs} discrete actions, got shape {np.shape(actions)}")
        if np.any((a < 0) | (a > 3)) or np.any(a != np.round(a)):
            raise ValueError("discrete actions must be integers in [0, 3]")
        return a.astype(np.int64)

    def observe(self):
        obs = self._obs_table[self.cell].copy()
        obs[:, -1] = self.tv
        return obs

    def room(self) -> np.ndarray:
        return self._room_of[self.cell]

    def _info(self):
        return {"pos": self.positions(), "room": self.room()}

    def positions(self):
        """Global (column, row) grid coordinates, corridor to the left of room 0."""
        rooms = self._room_of[self.cell]
        rc = np.array([self._cells[i][1:] for i in self.cell], dtype=np.float64)
        size = self.layout.room_size
        col = np.where(rooms == self.layout.corridor, rc[:, 1] - size, rc[:, 1] + rooms * size)
        row = np.where(rooms == self.layout.corridor, rc[:, 0] + self.layout.door_rows[0], rc[:, 0])
        return np.column_stack([col, row])

    def _reset_idx(self, idx):
        for i in idx:
            if self.random_start:
                self.cell[i] = self.rngs[i].integers(len(self._cells))
                while self.cell[i] == self._goal:
                    self.cell[i] = self.rngs[i].integers(len(self._cells))
            else:
                self.cell[i] = self._start
            self._sample_tv(i)

    def _sample_tv(self, i):
        in_tv = self._room_of[self.cell[i]] == self.layout.tv_room
        self.tv[i] = self.rngs[i].random() if in_tv else 0.0

    def _advance(self, actions):
        self.cell = self._next[self.cell, actions]
        for i in range(self.num_envs):
            self._sample_tv(i)
        hit = self.cell == self._goal
        return hit.astype(np.float64), hit


def make_env(name: str, num_envs: int = 1, seed: int | None = None, **params) -> VectorEnv:
    if name == PLANE:
        return PlaneEnv(num_envs, seed, **params)
    if name == WORMHOLE:
        return WormholeEnv(num_envs, seed, **params)
    if name == ROOMS:
        if "layout" in params and isinstance(params["layout"], dict):
            params = dict(params, layout=RoomsLayout(**params["layout"]))
        return RoomsEnv(num_envs, seed, **params)
    raise ValueError(f"unknown environment {name!r}; choose from {ENV_NAMES}")


def env_reset(spec: EnvSpec | str, seed: int | None = None, **params) -> np.ndarray:
    """Initial observation of a single fresh copy of the environment."""
    name = spec if isinstance(spec, str) else spec.name
    return make_env(name, 1, seed, **params).reset()[0]


def write_trajectory(path, step, obs, actions, r_ext, r_int, done) -> None:
    """Delimited-text trajectory export: step, obs..., action..., r_ext, r_int, done."""
    obs = np.atleast_2d(obs)
    actions = np.asarray(actions, dtype=np.float64).reshape(len(obs), -1)
    header = (
        ["step"]
        + [f"obs{i}" for i in range(obs.shape[1])]
        + [f"action{i}" for i in range(actions.shape[1])]
        + ["r_ext", "r_int", "done"]
    )
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(step, obs, actions, r_ext, r_int, done):
            w.writerow(
                [int(row[0])]
                + [repr(float(v)) for v in row[1]]
                + [repr(float(v)) for v in row[2]]
                + [repr(float(row[3])), repr(float(row[4])), int(bool(row[5]))]
            )


def read_trajectory(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=np.float64).reshape(-1, len(rows[0]))
    obs_cols = [i for i, h in enumerate(header) if h.startswith("obs")]
    act_cols = [i for i, h in enumerate(header) if h.startswith("action")]
    return {
        "step": body[:, 0].astype(np.int64),
        "obs": body[:, obs_cols],
        "action": body[:, act_cols],
        "r_ext": body[:, header.index("r_ext")],
        "r_int": body[:, header.index("r_int")],
        "done": body[:, header.index("done")].astype(bool),
    }
