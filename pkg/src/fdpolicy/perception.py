"""Shared observation encoder, future-view constructor and condition assembly.

The encoder maps one observation (point set + proprioception) to a
per-frame embedding; a pair of consecutive frames gives the current
feature ``F_cur``. An MLP predicts the next-step feature ``F_cons`` from
``F_cur``, and the target ``F_gt`` re-encodes the pair shifted one step
forward behind a stop-gradient.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import affine, affine_params
from .tensor import Graph, sinusoid_table

ROLES = ("current", "constructed", "target")


@dataclass(frozen=True)
class Observation:
    points: np.ndarray   # (N, 3)
    proprio: np.ndarray  # (D,)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        prop = np.asarray(self.proprio, dtype=np.float64).reshape(-1)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must be (N, 3), got {pts.shape}")
        if pts.shape[0] < 1:
            raise ValueError("observation has an empty point set")
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(prop))):
            raise ValueError("observation contains non-finite values")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "proprio", prop)


@dataclass(frozen=True)
class ObservationPair:
    prev: Observation
    curr: Observation

    def __post_init__(self):
        if self.prev.points.shape != self.curr.points.shape:
            raise ValueError("pair frames disagree on point count")
        if self.prev.proprio.shape != self.curr.proprio.shape:
            raise ValueError("pair frames disagree on proprio width")


@dataclass(frozen=True)
class Feature:
    vec: np.ndarray
    role: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown feature role {self.role!r}")


@dataclass(frozen=True)
class ConditionPair:
    G: np.ndarray
    G_hat: np.ndarray


@dataclass(frozen=True)
class PerceptionConfig:
    proprio_dim: int = 5
    point_hidden: int = 64
    point_out: int = 64
    frame_dim: int = 64
    constructor_hidden: int = 256
    timestep_dim: int = 64
    max_step: int = 100

    @property
    def feature_dim(self) -> int:
        return 2 * self.frame_dim

    @property
    def cond_dim(self) -> int:
        return self.feature_dim + self.timestep_dim


def init_perception(cfg: PerceptionConfig, rng: np.random.Generator,
                    zero_constructor_out: bool = False) -> dict[str, np.ndarray]:
    p = {}
    p.update(affine_params(rng, "enc.pt0", 3, cfg.point_hidden))
    p.update(affine_params(rng, "enc.pt1", cfg.point_hidden, cfg.point_out))
    p.update(affine_params(rng, "enc.fuse0", cfg.point_out + cfg.proprio_dim, cfg.frame_dim))
    p.update(affine_params(rng, "enc.fuse1", cfg.frame_dim, cfg.frame_dim))
    h = cfg.constructor_hidden
    p.update(affine_params(rng, "cons.0", cfg.feature_dim, h))
    p.update(affine_params(rng, "cons.1", h, h))
    p.update(affine_params(rng, "cons.2", h, cfg.feature_dim, zero=zero_constructor_out))
    return p


# --- graph builders -------------------------------------------------------------

def build_point_encoder(g: Graph, points: int, params) -> int:
    h = g.relu(affine(g, points, params, "enc.pt0"))
    return g.max_pool_set(affine(g, h, params, "enc.pt1"))


def build_frame_encoder(g: Graph, points: int, proprio: int, params) -> int:
    z = g.concat([build_point_encoder(g, points, params), proprio], axis=-1)
    return affine(g, g.relu(affine(g, z, params, "enc.fuse0")), params, "enc.fuse1")


def build_constructor(g: Graph, f_cur: int, params) -> int:
    h = g.relu(affine(g, f_cur, params, "cons.0"))
    h = g.relu(affine(g, h, params, "cons.1"))
    return affine(g, h, params, "cons.2")


def build_conditions(g: Graph, f_cur: int, f_cons: int, k: int, cfg: PerceptionConfig):
    temb = g.sinusoid(k, cfg.timestep_dim, cfg.max_step)
    return g.concat([f_cur, temb], axis=-1), g.concat([f_cons, temb], axis=-1)


def build_perception(g: Graph, params, cfg: PerceptionConfig, with_target: bool = False,
                     detach_current: bool = False) -> dict[str, int]:
    """Encoder + constructor over batched frames.

    Inputs: ``pts_prev``/``prop_prev``, ``pts_curr``/``prop_curr`` and, with
    ``with_target``, ``pts_next``/``prop_next``. Points are (B, N, 3).
    """
    e_prev = build_frame_encoder(g, g.input("pts_prev"), g.input("prop_prev"), params)
    e_curr = build_frame_encoder(g, g.input("pts_curr"), g.input("prop_curr"), params)
    f_cur = g.concat([e_prev, e_curr], axis=-1)
    src = g.stop_gradient(f_cur) if detach_current else f_cur
    out = {"f_cur": f_cur, "f_cons": build_constructor(g, src, params)}
    if with_target:
        e_next = build_frame_encoder(g, g.input("pts_next"), g.input("prop_next"), params)
        out["f_gt"] = g.stop_gradient(g.concat([e_curr, e_next], axis=-1))
    return out


# --- array-level API --------------------------------------------------------------

def _run(build, inputs):
    g = Graph()
    node = build(g)
    g.forward(inputs)
    return g.value(node)


def _check_proprio(prop, params):
    want = params["enc.fuse0.W"].shape[0] - params["enc.pt1.W"].shape[1]
    if prop.shape[-1] != want:
        raise ValueError(f"proprio width {prop.shape[-1]} != encoder width {want}")


def encode_points(points, params) -> np.ndarray:
    """Permutation-invariant embedding of an (N, 3) point set."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] != 3:
        raise ValueError(f"points must be a non-empty (N, 3) array, got {pts.shape}")
    out = _run(lambda g: build_point_encoder(g, g.input("p"), params), {"p": pts[None]})
    return out[0]


def encode_observation(obs: Observation, params) -> np.ndarray:
    _check_proprio(obs.proprio, params)
    out = _run(lambda g: build_frame_encoder(g, g.input("p"), g.input("r"), params),
               {"p": obs.points[None], "r": obs.proprio[None]})
    return out[0]


def encode_pair(pair: ObservationPair, params) -> Feature:
    vec = np.concatenate([encode_observation(pair.prev, params), encode_observation(pair.curr, params)])
    return Feature(vec, "current")


def construct_future(f_cur: Feature, params) -> Feature:
    if f_cur.role != "current":
        raise ValueError(f"constructor expects a current feature, got role {f_cur.role!r}")
    out = _run(lambda g: build_constructor(g, g.input("f"), params), {"f": f_cur.vec[None]})
    return Feature(out[0], "constructed")


def encode_future_target(observations, t: int, params) -> Feature:
    """Target feature for time ``t``: the encoder applied to ``(O_t, O_{t+1})``.

    Raises ``IndexError`` when ``t`` is the last frame, which tells the
    caller to drop the consistency term for that sample.
    """
    if t + 1 >= len(observations) or t < 0:
        raise IndexError(f"no observation after t={t} (episode has {len(observations)} frames)")
    f = encode_pair(ObservationPair(observations[t], observations[t + 1]), params)
    return Feature(f.vec, "target")


def make_conditions(f_cur: Feature, f_cons: Feature, k: int, cfg: PerceptionConfig) -> ConditionPair:
    if not 0 <= k <= cfg.max_step:
        raise ValueError(f"diffusion step {k} outside [0, {cfg.max_step}]")
    emb = sinusoid_table(cfg.max_step, cfg.timestep_dim)[k]
    return ConditionPair(np.concatenate([f_cur.vec, emb]), np.concatenate([f_cons.vec, emb]))
