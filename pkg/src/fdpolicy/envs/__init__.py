from .constants import DT, GRASP_RADIUS, MAX_SPEED, N_POINTS, PROPRIO_DIM, SUCCESS_TOL
from .dataset import (DemonstrationEpisode, collect_demos, generate_demos, load_demos, record_episode,
                      save_demos)
from .expert import scripted_expert
from .tasks import KINDS, TIERS, EnvState, ToyTask, hold_action, render_observation, reset, step

__all__ = ["DT", "GRASP_RADIUS", "MAX_SPEED", "N_POINTS", "PROPRIO_DIM", "SUCCESS_TOL",
           "DemonstrationEpisode", "collect_demos", "generate_demos", "load_demos", "record_episode",
           "save_demos", "scripted_expert", "KINDS", "TIERS", "EnvState", "ToyTask",
           "hold_action", "render_observation", "reset", "step"]
