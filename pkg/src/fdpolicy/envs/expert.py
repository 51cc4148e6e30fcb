"""Hand-written stage-indexed controllers for the toy tasks."""
from __future__ import annotations

import numpy as np

from . import constants as C
from .geometry import cap_norm, closest_on_segment, unit
from .tasks import EnvState, ToyTask

OPEN, CLOSED = -1.0, 1.0
_ALIGN_COS = np.cos(np.deg2rad(25.0))
_ORBIT_STEP = np.deg2rad(40.0)


def _move_to(src, dst, gain=1.0 / C.DT):
    """Velocity command landing exactly on ``dst`` when it is within one step."""
    return cap_norm(gain * (np.asarray(dst) - np.asarray(src)) / C.MAX_SPEED)


def _push(pusher, r_pusher, obj, r_obj, target, low_detour=False):
    """Command for a round pusher driving a round object towards ``target``.

    Behind the object the pusher advances so the object moves exactly along
    the object-target line; otherwise it travels to the staging point behind
    the object, detouring around it (or below it, for a tool whose shaft
    trails downwards).
    """
    u = unit(target - obj)
    reach = r_pusher + r_obj
    contact = obj - reach * u
    behind = obj - (reach + 0.02) * u
    dist = float(np.hypot(*(target - obj)))
    lined_up = float(np.dot(unit(obj - pusher), u)) > _ALIGN_COS
    if lined_up and np.hypot(*(pusher - contact)) < 0.03:
        return _move_to(pusher, contact + u * min(dist, 0.5 * reach, C.MAX_SPEED * C.DT))
    if low_detour:
        travel_y = min(obj[1] - (reach + 0.03), behind[1])
        if abs(pusher[0] - behind[0]) > 0.01:
            if pusher[1] > travel_y + 0.005:
                return _move_to(pusher, (pusher[0], travel_y))
            return _move_to(pusher, (behind[0], travel_y))
        return _move_to(pusher, behind)
    clearance = reach + 0.005
    if np.hypot(*(closest_on_segment(obj, pusher, behind) - obj)) < clearance:
        # orbit the object in bounded arcs until the staging point is in view
        radius = reach + 0.03
        here = np.arctan2(*(pusher - obj)[::-1])
        there = np.arctan2(-u[1], -u[0])
        delta = (there - here + np.pi) % (2 * np.pi) - np.pi
        ang = here + np.clip(delta, -_ORBIT_STEP, _ORBIT_STEP)
        return _move_to(pusher, obj + radius * np.array([np.cos(ang), np.sin(ang)]))
    return _move_to(pusher, behind)


def scripted_expert(task, state: EnvState) -> np.ndarray:
    """Action for ``state`` from the task's hand-written controller."""
    task = task if isinstance(task, ToyTask) else ToyTask(str(task))
    b = state.bodies
    if task.kind == "reach":
        return _move_to(state.agent, state.goal)
    if task.kind == "push-wall":
        c = C.PUSH_WALL
        target = (np.array(c.waypoints[state.stage]) if state.stage < 2 else state.goal)
        return _push(state.agent, c.agent_radius, b["puck"], c.puck_radius, target)
    if task.kind == "pick-place-2":
        block = b["block"]
        if not state.holding:
            if np.hypot(*(state.agent - block)) < 0.02:
                return np.array([0.0, 0.0, CLOSED])
            return np.array([*_move_to(state.agent, block), OPEN])
        if np.hypot(*(block - state.goal)) < 0.01:
            return np.array([0.0, 0.0, OPEN])
        offset = state.agent - block
        return np.array([*_move_to(state.agent, state.goal + offset), CLOSED])
    c = C.STICK_TOOL
    handle = b["stick"]
    if not state.holding:
        if np.hypot(*(state.agent - handle)) < 0.02:
            return np.array([0.0, 0.0, CLOSED])
        return np.array([*_move_to(state.agent, handle), OPEN])
    tip = handle + np.array([0.0, c.stick_length])
    v = _push(tip, c.stick_radius, b["puck"], c.puck_radius, state.goal, low_detour=True)
    return np.array([*v, CLOSED])
