"""Expert demonstration episodes and their binary container."""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..perception import Observation
from ..tensor import dumps_array, loads_array
from .expert import scripted_expert
from .tasks import ToyTask, reset, step

DS_MAGIC = b"FDDS"
DS_VERSION = 1


@dataclass
class DemonstrationEpisode:
    kind: str
    seed: int
    points: np.ndarray    # (T+1, N, 3)
    proprio: np.ndarray   # (T+1, D)
    actions: np.ndarray   # (T, A)
    success: bool

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        self.proprio = np.asarray(self.proprio, dtype=np.float64)
        self.actions = np.asarray(self.actions, dtype=np.float64)
        if len(self.actions) != len(self.points) - 1 or len(self.proprio) != len(self.points):
            raise ValueError("episode needs one more observation than actions")

    def __len__(self):
        return len(self.actions)

    @property
    def observations(self) -> list[Observation]:
        return [Observation(p, r) for p, r in zip(self.points, self.proprio)]


def record_episode(task, seed: int, policy=None, max_steps: int | None = None) -> DemonstrationEpisode:
    """Roll ``policy(task, state)`` (default: the scripted expert) from ``reset(task, seed)``."""
    task = task if isinstance(task, ToyTask) else ToyTask(str(task))
    policy = policy or scripted_expert
    limit = task.max_steps if max_steps is None else max_steps
    state, obs = reset(task, seed)
    pts, prop, acts = [obs.points], [obs.proprio], []
    while not state.done and state.t < limit:
        a = np.asarray(policy(task, state), dtype=np.float64)
        state, obs, _, _ = step(state, a)
        acts.append(np.clip(a, -1.0, 1.0))
        pts.append(obs.points)
        prop.append(obs.proprio)
    acts = np.array(acts).reshape(len(acts), task.action_dim)
    return DemonstrationEpisode(task.kind, seed, np.array(pts), np.array(prop), acts, state.success)


def collect_demos(task, n: int, seed: int = 0) -> list[DemonstrationEpisode]:
    """First ``n`` successful expert episodes over seeds ``seed, seed+1, ...``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    out = []
    for s in range(seed, seed + 10 * n):
        ep = record_episode(task, s)
        if ep.success:
            out.append(ep)
            if len(out) == n:
                return out
    raise RuntimeError(f"expert produced only {len(out)} of {n} successes in {10 * n} attempts")


def dumps_demos(episodes) -> bytes:
    if not episodes:
        raise ValueError("no episodes to write")
    kinds = {ep.kind for ep in episodes}
    if len(kinds) != 1:
        raise ValueError(f"mixed task kinds {sorted(kinds)}")
    head = {"task": episodes[0].kind, "count": len(episodes),
            "proprio_dim": int(episodes[0].proprio.shape[1]),
            "n_points": int(episodes[0].points.shape[1]),
            "action_dim": int(episodes[0].actions.shape[1]),
            "seeds": [int(ep.seed) for ep in episodes]}
    hb = json.dumps(head, sort_keys=True).encode()
    parts = [DS_MAGIC, struct.pack("<IQ", DS_VERSION, len(hb)), hb]
    for ep in episodes:
        parts += [dumps_array(ep.points), dumps_array(ep.proprio), dumps_array(ep.actions),
                  bytes([1 if ep.success else 0])]
    return b"".join(parts)


def loads_demos(buf: bytes) -> list[DemonstrationEpisode]:
    if buf[:4] != DS_MAGIC:
        raise ValueError("not a demonstration dataset (bad magic)")
    version, hlen = struct.unpack_from("<IQ", buf, 4)
    if version != DS_VERSION:
        raise ValueError(f"unsupported dataset version {version}")
    head = json.loads(buf[16:16 + hlen])
    pos = 16 + hlen
    eps = []
    for seed in head["seeds"]:
        pts, pos = loads_array(buf, pos)
        prop, pos = loads_array(buf, pos)
        acts, pos = loads_array(buf, pos)
        ok = bool(buf[pos])
        pos += 1
        eps.append(DemonstrationEpisode(head["task"], seed, pts, prop, acts, ok))
    if pos != len(buf):
        raise ValueError("trailing bytes after the last episode")
    return eps


def save_demos(episodes, path) -> None:
    Path(path).write_bytes(dumps_demos(episodes))


def load_demos(path) -> list[DemonstrationEpisode]:
    return loads_demos(Path(path).read_bytes())


def generate_demos(task, n: int, seed: int, out) -> list[DemonstrationEpisode]:
    """Collect ``n`` successful expert episodes and write them to ``out``."""
    eps = collect_demos(task, n, seed)
    save_demos(eps, out)
    return eps


__all__ = ["DemonstrationEpisode", "record_episode", "collect_demos", "dumps_demos", "loads_demos",
           "save_demos", "load_demos", "generate_demos"]
