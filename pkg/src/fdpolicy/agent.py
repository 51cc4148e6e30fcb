"""Inference wrapper: normalisation plus DDIM planning from a checkpoint."""
from __future__ import annotations

import numpy as np
from sklearn.preprocessing import StandardScaler

from .trainer import PolicyCheckpoint

_SCALE_FLOOR = 1e-3
STAT_KEYS = ("egocentric", "pts_mean", "pts_scale", "prop_mean", "prop_scale")


def to_agent_frame(pts, prop):
    """Express point xy relative to the agent position (first two proprio entries)."""
    pts = np.array(pts, dtype=np.float64)
    prop = np.asarray(prop, dtype=np.float64)
    pts[..., :2] -= prop[..., None, :2]
    return pts


def fit_normalizer(episodes, egocentric: bool = True) -> dict[str, np.ndarray]:
    """Per-coordinate standardisation stats for points and proprioception."""
    frames = [(to_agent_frame(ep.points, ep.proprio) if egocentric else np.asarray(ep.points))
              for ep in episodes]
    pts = np.concatenate([f.reshape(-1, 3) for f in frames])
    prop = np.concatenate([np.asarray(ep.proprio) for ep in episodes])
    out = {"egocentric": np.array([1.0 if egocentric else 0.0])}
    for key, data in (("pts", pts), ("prop", prop)):
        sc = StandardScaler().fit(data)
        out[f"{key}_mean"] = sc.mean_.astype(np.float64)
        out[f"{key}_scale"] = np.maximum(sc.scale_, _SCALE_FLOOR).astype(np.float64)
    return out


def normalize_points(pts, stats, prop=None):
    pts = np.asarray(pts, dtype=np.float64)
    if stats.get("egocentric", [0.0])[0] > 0:
        if prop is None:
            raise ValueError("agent-frame points need the matching proprio")
        pts = to_agent_frame(pts, prop)
    return (pts - stats["pts_mean"]) / stats["pts_scale"]


def normalize_proprio(prop, stats):
    return (np.asarray(prop, dtype=np.float64) - stats["prop_mean"]) / stats["prop_scale"]


def observation_fn(stats):
    """``(points, proprio) -> normalised (points, proprio)`` for :func:`build_samples`."""
    return lambda P, R: (normalize_points(P, stats, R), normalize_proprio(R, stats))


class DiffusionAgent:
    """Plans action sequences for batches of (previous, current) frames.

    Uses the EMA weights by default; the graphs are built once and reused.
    """

    def __init__(self, ckpt: PolicyCheckpoint, use_ema: bool = True):
        self.ckpt = ckpt
        self.net = ckpt.net(use_ema=use_ema)
        self.sched = ckpt.schedule
        self.stats = {k: ckpt.extras[k] for k in STAT_KEYS if k in ckpt.extras}

    @property
    def horizon(self) -> int:
        return self.ckpt.dcfg.horizon

    @property
    def action_dim(self) -> int:
        return self.ckpt.dcfg.action_dim

    def frames(self, pts_prev, prop_prev, pts_curr, prop_curr) -> dict:
        if self.stats:
            pts_prev = normalize_points(pts_prev, self.stats, prop_prev)
            pts_curr = normalize_points(pts_curr, self.stats, prop_curr)
            prop_prev, prop_curr = (normalize_proprio(p, self.stats) for p in (prop_prev, prop_curr))
        return {"pts_prev": np.asarray(pts_prev, dtype=np.float64),
                "prop_prev": np.asarray(prop_prev, dtype=np.float64),
                "pts_curr": np.asarray(pts_curr, dtype=np.float64),
                "prop_curr": np.asarray(prop_curr, dtype=np.float64)}

    def features(self, frames: dict):
        return self.net.features(frames)

    def plan(self, frames: dict, init: np.ndarray) -> np.ndarray:
        """Denoise ``init`` (B, H, A) into actions conditioned on ``frames``."""
        n_inf = self.ckpt.tcfg.inference_steps
        return self.net.sample(frames, self.sched, n_inf, init)

    def plan_observations(self, states, prev_obs, curr_obs, inits) -> np.ndarray:
        frames = self.frames(np.stack([o.points for o in prev_obs]), np.stack([o.proprio for o in prev_obs]),
                             np.stack([o.points for o in curr_obs]), np.stack([o.proprio for o in curr_obs]))
        return self.plan(frames, np.stack(inits))
