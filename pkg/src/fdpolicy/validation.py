"""Input checking for the estimator API."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .envs import DemonstrationEpisode, load_demos
from .perception import ObservationPair


def check_episodes(X) -> list[DemonstrationEpisode]:
    """A dataset path or a non-empty sequence of episodes sharing one task."""
    if isinstance(X, (str, Path)):
        X = load_demos(X)
    eps = list(X)
    if not eps:
        raise ValueError("no demonstration episodes given")
    for ep in eps:
        if not isinstance(ep, DemonstrationEpisode):
            raise TypeError(f"expected DemonstrationEpisode, got {type(ep).__name__}")
    widths = {(ep.points.shape[1:], ep.proprio.shape[1], ep.actions.shape[1]) for ep in eps}
    if len(widths) != 1:
        raise ValueError(f"episodes disagree on shapes: {sorted(widths)}")
    if not all(np.all(np.isfinite(ep.actions)) for ep in eps):
        raise ValueError("episode actions contain non-finite values")
    return eps


def check_pairs(X) -> dict[str, np.ndarray]:
    """Batch observation pairs into ``pts_prev, prop_prev, pts_curr, prop_curr``.

    Accepts a sequence of :class:`ObservationPair`, a single pair, a
    4-tuple of batched arrays, or a dict with those keys.
    """
    keys = ("pts_prev", "prop_prev", "pts_curr", "prop_curr")
    if isinstance(X, ObservationPair):
        X = [X]
    if isinstance(X, dict):
        arrs = [np.asarray(X[k], dtype=np.float64) for k in keys]
    elif isinstance(X, tuple) and len(X) == 4 and not isinstance(X[0], ObservationPair):
        arrs = [np.asarray(a, dtype=np.float64) for a in X]
    else:
        pairs = list(X)
        if not pairs:
            raise ValueError("no observation pairs given")
        if not all(isinstance(p, ObservationPair) for p in pairs):
            raise TypeError("expected ObservationPair items")
        arrs = [np.stack([p.prev.points for p in pairs]), np.stack([p.prev.proprio for p in pairs]),
                np.stack([p.curr.points for p in pairs]), np.stack([p.curr.proprio for p in pairs])]
    pp, rp, pc, rc = arrs
    if pp.ndim != 3 or pp.shape[2] != 3 or pp.shape != pc.shape:
        raise ValueError(f"point batches must be (n, N, 3) and equal, got {pp.shape} and {pc.shape}")
    if rp.ndim != 2 or rp.shape != rc.shape or len(rp) != len(pp):
        raise ValueError(f"proprio batches must be (n, D) and equal, got {rp.shape} and {rc.shape}")
    if not all(np.all(np.isfinite(a)) for a in arrs):
        raise ValueError("observations contain non-finite values")
    return dict(zip(keys, arrs))
