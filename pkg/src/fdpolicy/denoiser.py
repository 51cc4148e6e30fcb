"""Conditional 1-D U-Net noise predictor with FiLM conditioning.

Every conv block is ``conv -> group norm -> Mish -> FiLM(cond)``. The
down path is modulated by the current condition projected to
``cond_dim_down``, the bottleneck and up path by a projection to
``cond_dim_up``. The future condition enters according to ``injection``:

* ``none``  -- ignored entirely;
* ``early`` -- concatenated with the current condition before both
  projections, so it reaches every FiLM layer;
* ``mid``   -- a second FiLM driven by the future condition is applied in
  the bottleneck and up blocks only; the down path never sees it.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .params import affine, affine_params, uniform
from .schedule import NoiseSchedule, ddim_step
from .tensor import Graph

INJECTIONS = ("none", "early", "mid")


@dataclass(frozen=True)
class DenoiserConfig:
    action_dim: int
    horizon: int = 8
    down_channels: tuple = (64, 128)
    bottleneck_channels: int = 256
    cond_dim_down: int = 384
    cond_dim_up: int = 512
    cond_width: int = 192
    injection: str = "mid"
    kernel_size: int = 3
    groups: int = 8

    def __post_init__(self):
        object.__setattr__(self, "down_channels", tuple(self.down_channels))
        if self.injection not in INJECTIONS:
            raise ValueError(f"injection must be one of {INJECTIONS}, got {self.injection!r}")
        if len(self.down_channels) != 2:
            raise ValueError("exactly two down stages are supported")
        if self.horizon % 4 or self.horizon < 4:
            raise ValueError(f"horizon must be a positive multiple of 4, got {self.horizon}")
        if self.action_dim < 1:
            raise ValueError("action_dim must be >= 1")
        chans = (*self.down_channels, self.bottleneck_channels)
        if any(c % self.groups for c in chans):
            raise ValueError(f"channels {chans} must be divisible by groups={self.groups}")

    @property
    def film_input_width(self) -> int:
        return 2 * self.cond_width if self.injection == "early" else self.cond_width

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def _conv_params(rng, prefix, cin, cout, k):
    return {f"{prefix}.W": uniform(rng, (cout, cin, k), cin * k),
            f"{prefix}.b": uniform(rng, (cout,), cin * k)}


def _block_params(rng, prefix, cin, cout, k, cond_dim, extra_dim=None):
    p = _conv_params(rng, f"{prefix}.conv", cin, cout, k)
    p[f"{prefix}.gn.g"] = np.ones(cout)
    p[f"{prefix}.gn.b"] = np.zeros(cout)
    p.update(affine_params(rng, f"{prefix}.film", cond_dim, 2 * cout))
    if extra_dim is not None:
        p.update(affine_params(rng, f"{prefix}.film2", extra_dim, 2 * cout))
    return p


def init_denoiser(cfg: DenoiserConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    c1, c2 = cfg.down_channels
    cb, k, A = cfg.bottleneck_channels, cfg.kernel_size, cfg.action_dim
    fut = cfg.cond_dim_up if cfg.injection == "mid" else None
    p = {}
    p.update(affine_params(rng, "den.cond_down", cfg.film_input_width, cfg.cond_dim_down))
    p.update(affine_params(rng, "den.cond_up", cfg.film_input_width, cfg.cond_dim_up))
    if fut:
        p.update(affine_params(rng, "den.cond_fut", cfg.cond_width, cfg.cond_dim_up))
    p.update(_block_params(rng, "den.down1", A, c1, k, cfg.cond_dim_down))
    p.update(_conv_params(rng, "den.pool1", c1, c1, 3))
    p.update(_block_params(rng, "den.down2", c1, c2, k, cfg.cond_dim_down))
    p.update(_conv_params(rng, "den.pool2", c2, c2, 3))
    p.update(_block_params(rng, "den.mid", c2, cb, k, cfg.cond_dim_up, fut))
    p["den.upsample1.W"] = uniform(rng, (cb, c2, 4), cb * 4)
    p["den.upsample1.b"] = uniform(rng, (c2,), cb * 4)
    p.update(_block_params(rng, "den.up1", 2 * c2, c2, k, cfg.cond_dim_up, fut))
    p["den.upsample2.W"] = uniform(rng, (c2, c1, 4), c2 * 4)
    p["den.upsample2.b"] = uniform(rng, (c1,), c2 * 4)
    p.update(_block_params(rng, "den.up2", 2 * c1, c1, k, cfg.cond_dim_up, fut))
    p.update(_conv_params(rng, "den.final", c1, A, 1))
    return p


def count_params(cfg: DenoiserConfig) -> int:
    return int(sum(v.size for v in init_denoiser(cfg, np.random.default_rng(0)).values()))


def _p(g, params, name):
    return g.param(name, params[name])


def build_film(g: Graph, h: int, cond: int, params, prefix: str, channels: int) -> int:
    """``(1 + scale) * h + shift`` with scale/shift a linear map of ``cond``."""
    ss = affine(g, cond, params, prefix)
    scale, shift = g.split(ss, [channels, channels], axis=-1)
    return g.film(h, scale, shift)


def _block(g, x, params, prefix, cout, cond, cfg, extra=None, name=None):
    h = g.conv1d(x, _p(g, params, f"{prefix}.conv.W"), _p(g, params, f"{prefix}.conv.b"))
    h = g.group_norm(h, _p(g, params, f"{prefix}.gn.g"), _p(g, params, f"{prefix}.gn.b"), groups=cfg.groups)
    h = g.mish(h)
    h = build_film(g, h, cond, params, f"{prefix}.film", cout)
    if extra is not None:
        h = build_film(g, h, extra, params, f"{prefix}.film2", cout)
    if name:
        g.name(h, name)
    return h


def build_denoiser(g: Graph, a: int, G: int, G_hat: int | None, cfg: DenoiserConfig, params,
                   tap_names: bool = False) -> int:
    """Noise prediction node for noisy actions ``a`` of shape (B, H, A)."""
    if cfg.injection != "none" and G_hat is None:
        raise ValueError(f"injection={cfg.injection!r} needs a future condition")
    c1, c2 = cfg.down_channels
    cb = cfg.bottleneck_channels

    def tag(n):
        return n if tap_names else None

    cond_in = g.concat([G, G_hat], axis=-1) if cfg.injection == "early" else G
    cd = g.mish(affine(g, cond_in, params, "den.cond_down"))
    cu = g.mish(affine(g, cond_in, params, "den.cond_up"))
    fut = g.mish(affine(g, G_hat, params, "den.cond_fut")) if cfg.injection == "mid" else None

    x = g.transpose(a, (0, 2, 1))
    s1 = _block(g, x, params, "den.down1", c1, cd, cfg, name=tag("down1"))
    h = g.conv1d(s1, _p(g, params, "den.pool1.W"), _p(g, params, "den.pool1.b"), stride=2)
    s2 = _block(g, h, params, "den.down2", c2, cd, cfg, name=tag("down2"))
    h = g.conv1d(s2, _p(g, params, "den.pool2.W"), _p(g, params, "den.pool2.b"), stride=2)
    h = _block(g, h, params, "den.mid", cb, cu, cfg, extra=fut, name=tag("mid"))
    h = g.conv_transpose1d(h, _p(g, params, "den.upsample1.W"), _p(g, params, "den.upsample1.b"))
    h = _block(g, g.concat([h, s2], axis=1), params, "den.up1", c2, cu, cfg, extra=fut, name=tag("up1"))
    h = g.conv_transpose1d(h, _p(g, params, "den.upsample2.W"), _p(g, params, "den.upsample2.b"))
    h = _block(g, g.concat([h, s1], axis=1), params, "den.up2", c1, cu, cfg, extra=fut, name=tag("up2"))
    out = g.conv1d(h, _p(g, params, "den.final.W"), _p(g, params, "den.final.b"))
    return g.transpose(out, (0, 2, 1))


@dataclass
class DenoiserNet:
    """Stand-alone denoiser graph over explicit condition inputs.

    Inputs ``a`` (B, H, A), ``G`` and ``G_hat`` (B, cond_width).
    """

    cfg: DenoiserConfig
    params: dict
    graph: Graph = field(init=False)
    out: int = field(init=False)

    def __post_init__(self):
        g = Graph()
        G_hat = g.input("G_hat")
        self.out = build_denoiser(g, g.input("a"), g.input("G"), G_hat, self.cfg, self.params,
                                  tap_names=True)
        self.graph = g

    def __call__(self, a, G, G_hat, params=None, overrides=None):
        self.graph.forward({"a": a, "G": G, "G_hat": G_hat}, params=params, overrides=overrides)
        return self.graph.value(self.out)

    def activations(self) -> dict[str, np.ndarray]:
        return {n: self.graph.value(self.graph.node_id(n))
                for n in ("down1", "down2", "mid", "up1", "up2")}


def film_modulate(h, cond, params, prefix: str = "film") -> np.ndarray:
    """Array-level FiLM on ``h`` (C, L) or (B, C, L) with a 1-D or batched ``cond``."""
    h = np.asarray(h, dtype=np.float64)
    cond = np.asarray(cond, dtype=np.float64)
    squeeze = h.ndim == 2
    if squeeze:
        h, cond = h[None], cond[None]
    W = params[f"{prefix}.W"]
    if cond.shape[-1] != W.shape[0]:
        raise ValueError(f"condition width {cond.shape[-1]} != projection width {W.shape[0]}")
    g = Graph()
    node = build_film(g, g.input("h"), g.input("c"), params, prefix, h.shape[1])
    g.forward({"h": h, "c": cond})
    out = g.value(node)
    return out[0] if squeeze else out


def predict_noise(a_k, cond, cfg: DenoiserConfig, params) -> np.ndarray:
    """Noise estimate for one (H, A) sequence or a batch (B, H, A)."""
    a = np.asarray(a_k, dtype=np.float64)
    squeeze = a.ndim == 2
    G, G_hat = np.asarray(cond.G), None if cond.G_hat is None else np.asarray(cond.G_hat)
    if squeeze:
        a, G = a[None], G[None]
        G_hat = None if G_hat is None else G_hat[None]
    if a.shape[1:] != (cfg.horizon, cfg.action_dim):
        raise ValueError(f"noisy actions {a.shape[1:]} != ({cfg.horizon}, {cfg.action_dim})")
    if G_hat is None:
        if cfg.injection != "none":
            raise ValueError(f"injection={cfg.injection!r} needs a future condition")
        G_hat = np.zeros_like(G)
    out = DenoiserNet(cfg, params)(a, G, G_hat)
    return out[0] if squeeze else out


def ddim_sample(eps_fn, shape, sched: NoiseSchedule, n_steps: int, rng=None, init=None,
                eta: float = 0.0, clip: float | None = 1.0) -> np.ndarray:
    """Strided DDIM loop from pure noise down to step 0.

    ``eps_fn(a, t)`` returns the noise estimate for a batch at integer step
    ``t``. ``clip`` bounds the clean-sample estimate at each step.
    """
    a = np.asarray(init, dtype=np.float64) if init is not None else rng.standard_normal(shape)
    for t, t_prev in sched.inference_steps(n_steps):
        eps = eps_fn(a, t)
        if clip is not None:
            ab_t = sched.alpha_bar(t)
            x0 = np.clip((a - np.sqrt(1 - ab_t) * eps) / np.sqrt(ab_t), -clip, clip)
            eps = (a - np.sqrt(ab_t) * x0) / np.sqrt(1 - ab_t)
        z = rng.standard_normal(a.shape) if eta > 0 else None
        a = ddim_step(a, eps, t, t_prev, eta, sched, z)
    return a
