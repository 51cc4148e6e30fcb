"""Named parameter arrays backed by one contiguous float64 buffer."""
from __future__ import annotations

import math

import numpy as np


class ParamStore:
    """Ordered name -> array mapping whose arrays are views into ``flat``.

    Optimizers and EMA operate on ``flat`` in one vectorized pass; graphs
    see the per-name views, so in-place updates are visible without any
    re-binding.
    """

    def __init__(self, arrays: dict[str, np.ndarray]):
        names = sorted(arrays)
        sizes = [int(np.asarray(arrays[n]).size) for n in names]
        self.flat = np.zeros(int(sum(sizes)), dtype=np.float64)
        self.views: dict[str, np.ndarray] = {}
        self.slices: dict[str, slice] = {}
        pos = 0
        for n, s in zip(names, sizes):
            a = np.asarray(arrays[n], dtype=np.float64)
            sl = slice(pos, pos + s)
            self.flat[sl] = a.reshape(-1)
            self.views[n] = self.flat[sl].reshape(a.shape)
            self.slices[n] = sl
            pos += s

    def __getitem__(self, name):
        return self.views[name]

    def __contains__(self, name):
        return name in self.views

    def __iter__(self):
        return iter(self.views)

    def __len__(self):
        return len(self.views)

    def items(self):
        return self.views.items()

    def keys(self):
        return self.views.keys()

    @property
    def size(self) -> int:
        return self.flat.size

    def copy(self) -> "ParamStore":
        return ParamStore({n: v.copy() for n, v in self.views.items()})

    def flatten_grads(self, grads: dict[str, np.ndarray]) -> np.ndarray:
        out = np.zeros_like(self.flat)
        for n, g in grads.items():
            if n in self.slices:
                out[self.slices[n]] = g.reshape(-1)
        return out

    def subset(self, prefix: str) -> dict[str, np.ndarray]:
        return {n: v for n, v in self.views.items() if n.startswith(prefix)}


def uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def affine_params(rng, prefix: str, fan_in: int, fan_out: int, zero: bool = False) -> dict:
    if zero:
        return {f"{prefix}.W": np.zeros((fan_in, fan_out)), f"{prefix}.b": np.zeros(fan_out)}
    return {f"{prefix}.W": uniform(rng, (fan_in, fan_out), fan_in),
            f"{prefix}.b": uniform(rng, (fan_out,), fan_in)}


def affine(g, x, params, prefix: str):
    return g.affine(x, g.param(f"{prefix}.W", params[f"{prefix}.W"]),
                    g.param(f"{prefix}.b", params[f"{prefix}.b"]))
