"""Physical constants of the toy suite, one block per task."""
from __future__ import annotations

from dataclasses import dataclass

DT = 0.05               # seconds per step
MAX_SPEED = 1.0         # m/s, applied to the norm of the velocity command
WORKSPACE = ((0.0, 0.0), (1.0, 1.0))
N_POINTS = 64
PROPRIO_DIM = 5         # x, y, vx, vy, grasp flag
GRASP_RADIUS = 0.05
SUCCESS_TOL = 0.05

# Height tags separating bodies in the lifted point cloud.
Z_GOAL, Z_OBJECT, Z_TOOL, Z_WALL = 0.0, 0.04, 0.08, 0.12


@dataclass(frozen=True)
class ReachConstants:
    max_steps: int = 60
    goal_radius: float = 0.05
    spawn_lo: float = 0.1
    spawn_hi: float = 0.9
    min_start_dist: float = 0.3


@dataclass(frozen=True)
class PushWallConstants:
    max_steps: int = 120
    agent_radius: float = 0.03
    puck_radius: float = 0.04
    goal_radius: float = 0.05
    wall_y: tuple = (0.48, 0.52)
    gap_x: tuple = (0.4, 0.6)
    puck_box: tuple = ((0.2, 0.2), (0.8, 0.3))
    goal_box: tuple = ((0.3, 0.7), (0.7, 0.8))
    agent_box: tuple = ((0.1, 0.05), (0.9, 0.12))
    waypoints: tuple = ((0.5, 0.36), (0.5, 0.64))
    waypoint_tol: float = 0.03
    n_puck: int = 24
    n_goal: int = 24
    n_wall: int = 8     # per wall segment


@dataclass(frozen=True)
class PickPlaceConstants:
    max_steps: int = 100
    block_half: float = 0.03
    goal_radius: float = 0.06
    block_box: tuple = ((0.15, 0.15), (0.85, 0.45))
    goal_box: tuple = ((0.15, 0.6), (0.85, 0.85))
    agent_box: tuple = ((0.1, 0.1), (0.9, 0.9))
    n_block: int = 32
    n_goal: int = 32


@dataclass(frozen=True)
class StickToolConstants:
    max_steps: int = 120
    agent_y_max: float = 0.4      # the agent cannot cross this line
    stick_length: float = 0.3
    stick_radius: float = 0.01
    puck_radius: float = 0.04
    goal_radius: float = 0.05
    handle_box: tuple = ((0.15, 0.05), (0.85, 0.1))
    puck_box: tuple = ((0.3, 0.5), (0.7, 0.55))
    goal_box: tuple = ((0.3, 0.62), (0.7, 0.68))
    agent_box: tuple = ((0.1, 0.1), (0.9, 0.35))
    moved_tol: float = 0.01
    n_stick: int = 24
    n_puck: int = 20
    n_goal: int = 20


REACH = ReachConstants()
PUSH_WALL = PushWallConstants()
PICK_PLACE = PickPlaceConstants()
STICK_TOOL = StickToolConstants()
