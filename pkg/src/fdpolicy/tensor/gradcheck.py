from __future__ import annotations

from typing import Callable

import numpy as np

from .graph import Graph, GraphError


def grad_check(build: Callable[[Graph], int], point: dict[str, np.ndarray] | None = None,
               inputs: dict[str, np.ndarray] | None = None, eps: float = 1e-5,
               max_coords: int | None = None, seed: int = 0) -> float:
    """Max relative error between backward() and central differences.

    ``build`` populates a fresh graph and returns its scalar output node.
    ``point`` overrides parameter values by name. The error per coordinate is
    ``|analytic - numeric| / max(1, |numeric|)``. ``max_coords`` samples a
    random subset of coordinates per parameter for large nets.
    """
    if not 0 < eps <= 1e-2:
        raise ValueError(f"eps must lie in (0, 1e-2], got {eps}")
    g = Graph()
    out = build(g)
    for name, val in (point or {}).items():
        g.params[name] = np.array(val, dtype=np.float64)
    inputs = inputs or {}
    g.forward(inputs)
    if np.ndim(g.value(out)) != 0:
        raise GraphError("grad_check needs a scalar-valued graph")
    analytic = g.backward(out)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name in sorted(g.trainable):
        p = g.params[name]
        flat = p.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        ga = analytic[name].reshape(-1)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            fp = _evaluate(g, inputs, out)
            flat[i] = orig - eps
            fm = _evaluate(g, inputs, out)
            flat[i] = orig
            num = (fp - fm) / (2.0 * eps)
            worst = max(worst, abs(ga[i] - num) / max(1.0, abs(num)))
    return worst


def _evaluate(g, inputs, out):
    g.forward(inputs)
    return float(g.value(out))
