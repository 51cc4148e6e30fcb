"""Four kinematic manipulation tasks with point-set observations.

All dynamics are first-order: the (capped) velocity command moves the
agent for one step of ``DT`` seconds. Bodies are pushed out of overlaps
with the agent or tool, and a grasp channel above 0.5 attaches the
nearest graspable body within ``GRASP_RADIUS``.

States are values: :func:`step` never mutates its input.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..perception import Observation
from . import constants as C
from .geometry import (cap_norm, circle_outline, lift, push_out_of_capsule, push_out_of_circle,
                       push_out_of_rect, rect_outline)

KINDS = ("reach", "push-wall", "pick-place-2", "stick-tool-3")
TIERS = {"reach": "Easy", "push-wall": "Medium", "pick-place-2": "Hard", "stick-tool-3": "VeryHard"}
_ALIASES = {"reach": "reach", "pushwall": "push-wall", "pickplace2stage": "pick-place-2",
            "sticktool3stage": "stick-tool-3"}
_CONSTS = {"reach": C.REACH, "push-wall": C.PUSH_WALL, "pick-place-2": C.PICK_PLACE,
           "stick-tool-3": C.STICK_TOOL}


@dataclass(frozen=True)
class ToyTask:
    kind: str

    def __post_init__(self):
        k = self.kind.strip().lower()
        k = _ALIASES.get(k.replace("-", "").replace("_", ""), k)
        if k not in KINDS:
            raise ValueError(f"unknown task {self.kind!r}; choose from {KINDS}")
        object.__setattr__(self, "kind", k)

    @property
    def tier(self) -> str:
        return TIERS[self.kind]

    @property
    def consts(self):
        return _CONSTS[self.kind]

    @property
    def bounds(self):
        return C.WORKSPACE

    @property
    def tolerance(self) -> float:
        return C.SUCCESS_TOL

    @property
    def max_steps(self) -> int:
        return self.consts.max_steps

    @property
    def action_dim(self) -> int:
        return 3 if self.kind in ("pick-place-2", "stick-tool-3") else 2

    @property
    def n_stages(self) -> int:
        return {"reach": 1, "push-wall": 3, "pick-place-2": 3, "stick-tool-3": 3}[self.kind]


@dataclass
class EnvState:
    kind: str
    agent: np.ndarray
    vel: np.ndarray
    goal: np.ndarray
    bodies: dict = field(default_factory=dict)   # name -> (2,) position
    holding: bool = False
    stage: int = 0
    t: int = 0
    success: bool = False
    done: bool = False
    start: dict = field(default_factory=dict)    # initial body positions

    @property
    def task(self) -> ToyTask:
        return ToyTask(self.kind)

    def copy(self) -> "EnvState":
        return EnvState(self.kind, self.agent.copy(), self.vel.copy(), self.goal.copy(),
                        {k: v.copy() for k, v in self.bodies.items()}, self.holding, self.stage,
                        self.t, self.success, self.done, {k: v.copy() for k, v in self.start.items()})

    def same_as(self, other: "EnvState") -> bool:
        if (self.kind, self.holding, self.stage, self.t, self.success, self.done) != \
                (other.kind, other.holding, other.stage, other.t, other.success, other.done):
            return False
        arrays = [(self.agent, other.agent), (self.vel, other.vel), (self.goal, other.goal)]
        if self.bodies.keys() != other.bodies.keys():
            return False
        arrays += [(self.bodies[k], other.bodies[k]) for k in self.bodies]
        return all(np.array_equal(a, b) for a, b in arrays)


def _uniform(rng, box):
    lo, hi = np.asarray(box[0], dtype=np.float64), np.asarray(box[1], dtype=np.float64)
    return lo + (hi - lo) * rng.random(2)


def _as_task(task) -> ToyTask:
    return task if isinstance(task, ToyTask) else ToyTask(str(task))


def _walls(c: C.PushWallConstants):
    y0, y1 = c.wall_y
    return [(np.array([0.0, y0]), np.array([c.gap_x[0], y1])),
            (np.array([c.gap_x[1], y0]), np.array([1.0, y1]))]


def _stick_tip(state: EnvState) -> np.ndarray:
    return state.bodies["stick"] + np.array([0.0, C.STICK_TOOL.stick_length])


def reset(task, seed: int):
    """Fresh state and its observation for a seeded placement."""
    task = _as_task(task)
    if seed < 0:
        raise ValueError("seed must be >= 0")
    rng = np.random.default_rng([seed, KINDS.index(task.kind)])
    c = task.consts
    bodies = {}
    if task.kind == "reach":
        box = ((c.spawn_lo, c.spawn_lo), (c.spawn_hi, c.spawn_hi))
        goal = _uniform(rng, box)
        agent = _uniform(rng, box)
        while np.hypot(*(agent - goal)) < c.min_start_dist:
            agent = _uniform(rng, box)
    elif task.kind == "push-wall":
        bodies["puck"] = _uniform(rng, c.puck_box)
        goal = _uniform(rng, c.goal_box)
        agent = _uniform(rng, c.agent_box)
    elif task.kind == "pick-place-2":
        bodies["block"] = _uniform(rng, c.block_box)
        goal = _uniform(rng, c.goal_box)
        agent = _uniform(rng, c.agent_box)
    else:
        bodies["stick"] = _uniform(rng, c.handle_box)
        bodies["puck"] = _uniform(rng, c.puck_box)
        goal = _uniform(rng, c.goal_box)
        agent = _uniform(rng, c.agent_box)
    state = EnvState(task.kind, agent, np.zeros(2), goal, bodies,
                     start={k: v.copy() for k, v in bodies.items()})
    return state, render_observation(state)


def hold_action(action) -> np.ndarray:
    """The action that keeps the agent still without changing its grasp.

    Actions are velocities, so this is what follows the last recorded step
    when a planning window runs past the end of an episode.
    """
    a = np.array(action, dtype=np.float64).reshape(-1)
    a[:2] = 0.0
    return a


def _check_action(action, dim):
    a = np.asarray(action, dtype=np.float64).reshape(-1)
    if a.shape[0] != dim:
        raise ValueError(f"expected a {dim}-dim action, got {a.shape[0]}")
    if not np.all(np.isfinite(a)):
        raise ValueError("action contains non-finite values")
    return np.clip(a, -1.0, 1.0)


def _success(state: EnvState) -> bool:
    kind = state.kind
    tol = C.SUCCESS_TOL
    if kind == "reach":
        return bool(np.hypot(*(state.agent - state.goal)) < tol)
    if kind == "pick-place-2":
        return (not state.holding) and bool(np.hypot(*(state.bodies["block"] - state.goal)) < tol)
    return bool(np.hypot(*(state.bodies["puck"] - state.goal)) < tol)


def _stage(state: EnvState) -> int:
    kind, s = state.kind, state.stage
    if kind == "push-wall":
        c = C.PUSH_WALL
        puck = state.bodies["puck"]
        if np.hypot(*(puck - c.waypoints[0])) < c.waypoint_tol:
            s = max(s, 1)
        if puck[1] > c.waypoints[1][1] - 0.06:
            s = max(s, 2)
    elif kind == "pick-place-2":
        if state.holding:
            s = max(s, 1)
        if state.success:
            s = max(s, 2)
    elif kind == "stick-tool-3":
        if state.holding:
            s = max(s, 1)
        if np.hypot(*(state.bodies["puck"] - state.start["puck"])) > C.STICK_TOOL.moved_tol:
            s = max(s, 2)
    return s


def step(state: EnvState, action):
    """Advance one step; returns ``(state', observation, done, success)``."""
    if state.done:
        raise RuntimeError("episode is over; call reset")
    task = state.task
    a = _check_action(action, task.action_dim)
    s = state.copy()
    lo, hi = np.array(C.WORKSPACE[0]), np.array(C.WORKSPACE[1])

    if task.action_dim == 3:
        grip = a[2] > 0.5
        if not grip:
            s.holding = False
        elif not s.holding:
            handle = "block" if s.kind == "pick-place-2" else "stick"
            s.holding = bool(np.hypot(*(s.agent - s.bodies[handle])) <= C.GRASP_RADIUS)

    vel = cap_norm(a[:2]) * C.MAX_SPEED
    new = np.clip(s.agent + vel * C.DT, lo, hi)
    if s.kind == "stick-tool-3":
        new[1] = min(new[1], C.STICK_TOOL.agent_y_max)
    if s.kind == "push-wall":
        c = C.PUSH_WALL
        for wlo, whi in _walls(c):
            new = push_out_of_rect(new, c.agent_radius, wlo, whi)
    disp = new - s.agent
    s.agent = new
    s.vel = disp / C.DT

    if s.kind == "push-wall":
        c = C.PUSH_WALL
        puck = push_out_of_circle(s.bodies["puck"], c.puck_radius, s.agent, c.agent_radius)
        for wlo, whi in _walls(c):
            puck = push_out_of_rect(puck, c.puck_radius, wlo, whi)
        s.bodies["puck"] = np.clip(puck, lo, hi)
        # a puck jammed against a wall pushes the agent back
        s.agent = push_out_of_circle(s.agent, c.agent_radius, s.bodies["puck"], c.puck_radius)
        s.vel = (s.agent - state.agent) / C.DT
    elif s.kind == "pick-place-2":
        if s.holding:
            s.bodies["block"] = np.clip(s.bodies["block"] + disp, lo, hi)
    elif s.kind == "stick-tool-3":
        c = C.STICK_TOOL
        if s.holding:
            s.bodies["stick"] = s.bodies["stick"] + disp
        puck = push_out_of_capsule(s.bodies["puck"], c.puck_radius, s.bodies["stick"],
                                   _stick_tip(s), c.stick_radius)
        s.bodies["puck"] = np.clip(puck, lo, hi)

    s.t += 1
    s.success = state.success or _success(s)
    s.stage = _stage(s)
    s.done = s.success or s.t >= task.max_steps
    return s, render_observation(s), s.done, s.success


def render_observation(state: EnvState, noise_std: float = 0.0, rng=None) -> Observation:
    """64 outline points (z tags the body type) and agent proprioception."""
    kind, b = state.kind, state.bodies
    parts = []
    if kind == "reach":
        parts.append(lift(circle_outline(state.goal, C.REACH.goal_radius, C.N_POINTS), C.Z_GOAL))
    elif kind == "push-wall":
        c = C.PUSH_WALL
        parts.append(lift(circle_outline(b["puck"], c.puck_radius, c.n_puck), C.Z_OBJECT))
        parts.append(lift(circle_outline(state.goal, c.goal_radius, c.n_goal), C.Z_GOAL))
        for wlo, whi in _walls(c):
            parts.append(lift(rect_outline(wlo, whi, c.n_wall), C.Z_WALL))
    elif kind == "pick-place-2":
        c = C.PICK_PLACE
        h = np.full(2, c.block_half)
        parts.append(lift(rect_outline(b["block"] - h, b["block"] + h, c.n_block), C.Z_OBJECT))
        parts.append(lift(circle_outline(state.goal, c.goal_radius, c.n_goal), C.Z_GOAL))
    else:
        c = C.STICK_TOOL
        r = c.stick_radius
        base = b["stick"]
        parts.append(lift(rect_outline(base - r, base + np.array([r, c.stick_length + r]), c.n_stick),
                          C.Z_TOOL))
        parts.append(lift(circle_outline(b["puck"], c.puck_radius, c.n_puck), C.Z_OBJECT))
        parts.append(lift(circle_outline(state.goal, c.goal_radius, c.n_goal), C.Z_GOAL))
    pts = np.concatenate(parts)
    if noise_std > 0:
        if rng is None:
            raise ValueError("observation noise needs an explicit rng")
        pts = pts + rng.normal(0.0, noise_std, pts.shape)
    proprio = np.array([*state.agent, *state.vel, 1.0 if state.holding else 0.0])
    return Observation(pts, proprio)
