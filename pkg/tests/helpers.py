"""Shared builders for gradient checks and tiny network configs."""
import numpy as np

from fdpolicy.denoiser import DenoiserConfig
from fdpolicy.perception import PerceptionConfig
from fdpolicy.tensor import Graph, grad_check


def scalarize(make):
    """Wrap a graph fragment in a random linear functional so any output shape is checkable."""
    g0 = Graph()
    node = make(g0)
    g0.forward({})
    w = np.random.default_rng(99).standard_normal(g0.value(node).shape)

    def build(g):
        return g.sum(g.mul(make(g), g.const(w)))

    return build


def op_grad_error(make, eps=1e-5):
    return grad_check(scalarize(make), eps=eps)


def tiny_perception(max_step=10):
    return PerceptionConfig(proprio_dim=3, point_hidden=6, point_out=5, frame_dim=4,
                            constructor_hidden=7, timestep_dim=4, max_step=max_step)


def tiny_denoiser(injection="mid", action_dim=2, cond_width=12):
    return DenoiserConfig(action_dim=action_dim, horizon=4, down_channels=(4, 8), bottleneck_channels=8,
                          cond_dim_down=6, cond_dim_up=10, cond_width=cond_width, injection=injection,
                          groups=2)
