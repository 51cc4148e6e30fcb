"""Dual-loss training: denoising loss plus weighted future-view consistency."""
from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from .denoiser import DenoiserConfig, init_denoiser
from .params import ParamStore
from .perception import Feature, PerceptionConfig, init_perception
from .policy import PolicyNet
from .schedule import NoiseSchedule, forward_diffuse_batch, make_schedule
from .tensor import Graph, NonFiniteError, dumps_array, loads_array

log = logging.getLogger(__name__)


# --- beta modes -------------------------------------------------------------------

@dataclass(frozen=True)
class BetaMode:
    kind: str = "fixed"         # off | fixed | dynamic
    beta: float = 0.1           # fixed weight, or the saturation level for dynamic
    growth_rate: float = 0.0    # dynamic only

    def __post_init__(self):
        if self.kind not in ("off", "fixed", "dynamic"):
            raise ValueError(f"unknown beta mode {self.kind!r}")
        if self.beta < 0 or self.growth_rate < 0:
            raise ValueError("beta and growth rate must be non-negative")

    @classmethod
    def parse(cls, text: str) -> "BetaMode":
        """``off``, ``fixed:<beta>`` or ``dynamic:<beta_max>,<rate>``."""
        text = text.strip().lower()
        if text == "off":
            return cls("off", 0.0, 0.0)
        kind, _, rest = text.partition(":")
        if kind == "fixed" and rest:
            return cls("fixed", float(rest))
        if kind == "dynamic" and rest:
            bmax, _, rate = rest.partition(",")
            return cls("dynamic", float(bmax), float(rate) if rate else 1e-3)
        raise ValueError(f"cannot parse beta mode {text!r}")

    def __str__(self):
        if self.kind == "off":
            return "off"
        if self.kind == "fixed":
            return f"fixed:{self.beta:g}"
        return f"dynamic:{self.beta:g},{self.growth_rate:g}"

    def at(self, step: int) -> float:
        if self.kind == "off":
            return 0.0
        if self.kind == "fixed":
            return self.beta
        return self.beta * (1.0 - math.exp(-self.growth_rate * step))


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    warmup_steps: int = 500
    epochs: int = 300
    batch: int = 32
    beta_mode: BetaMode = field(default_factory=BetaMode)
    ema_decay: float = 0.999
    weight_decay: float = 1e-6
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    seed: int = 0
    diffusion_steps: int = 100
    inference_steps: int = 10
    schedule: str = "cosine"
    detach_current: bool = False
    ema_warmup: bool = True     # decay ramps up as 1 - (1 + step)^-0.75, capped at ema_decay

    def __post_init__(self):
        if isinstance(self.beta_mode, str):
            object.__setattr__(self, "beta_mode", BetaMode.parse(self.beta_mode))
        object.__setattr__(self, "adam_betas", tuple(self.adam_betas))
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.epochs < 1 or self.batch < 1:
            raise ValueError("epochs and batch must be >= 1")
        if not 0 <= self.ema_decay < 1:
            raise ValueError("ema_decay must lie in [0, 1)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["beta_mode"] = str(self.beta_mode)
        d["adam_betas"] = list(self.adam_betas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


# --- losses -----------------------------------------------------------------------

def construction_loss(f_cons: Feature, f_gt: Feature) -> float:
    """Mean squared difference between constructed and target features."""
    if f_cons.role != "constructed" or f_gt.role != "target":
        raise ValueError(f"expected (constructed, target) roles, got ({f_cons.role}, {f_gt.role})")
    a, b = np.atleast_2d(f_cons.vec), np.atleast_2d(f_gt.vec)
    g = Graph()
    out = g.mse(g.input("a"), g.stop_gradient(g.input("b")))
    g.forward({"a": a, "b": b})
    return float(g.value(out))


def total_loss(l_diff: float, l_cons: float, cfg: TrainConfig, step: int = 0) -> float:
    if cfg.beta_mode.kind == "off":
        return l_diff
    return l_diff + cfg.beta_mode.at(step) * l_cons


def lr_at(step: int, total_steps: int, base: float, warmup: int) -> float:
    """Linear warmup from 0, then cosine decay to 0 at ``total_steps``."""
    if warmup > 0 and step < warmup:
        return base * step / warmup
    if total_steps <= warmup:
        return base
    progress = min(max((step - warmup) / (total_steps - warmup), 0.0), 1.0)
    return base * 0.5 * (1.0 + math.cos(math.pi * progress))


def ema_update(shadow: np.ndarray, live: np.ndarray, decay: float) -> np.ndarray:
    """In-place ``shadow <- decay * shadow + (1 - decay) * live``; returns shadow."""
    if shadow.shape != live.shape:
        raise ValueError(f"EMA shape mismatch {shadow.shape} vs {live.shape}")
    if not 0 <= decay < 1:
        raise ValueError("decay must lie in [0, 1)")
    shadow *= decay
    shadow += (1.0 - decay) * live
    return shadow


def ema_decay_at(step: int, max_decay: float, warmup: bool = True, power: float = 0.75) -> float:
    """Per-step EMA decay; with ``warmup`` early steps average over a short window."""
    if not warmup:
        return max_decay
    return min(max_decay, 1.0 - (1.0 + step) ** -power)


class AdamW:
    """Decoupled-weight-decay Adam over one flat parameter vector."""

    def __init__(self, size: int, betas=(0.9, 0.999), eps=1e-8, weight_decay=1e-6):
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.b1, self.b2 = betas
        self.eps = eps
        self.wd = weight_decay
        self.t = 0

    def step(self, flat: np.ndarray, grad: np.ndarray, lr: float) -> None:
        self.t += 1
        self.m *= self.b1
        self.m += (1 - self.b1) * grad
        self.v *= self.b2
        self.v += (1 - self.b2) * grad * grad
        if lr == 0:
            return
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        flat *= 1 - lr * self.wd
        flat -= (lr / c1) * self.m / (np.sqrt(self.v / c2) + self.eps)


# --- dataset of training samples ------------------------------------------------

@dataclass
class SampleSet:
    """Flattened training samples drawn from demonstration episodes.

    ``frames_pts`` / ``frames_prop`` hold every observation once; samples
    refer to them by index (previous, current, next frame).
    """

    frames_pts: np.ndarray
    frames_prop: np.ndarray
    prev_idx: np.ndarray
    curr_idx: np.ndarray
    next_idx: np.ndarray
    next_mask: np.ndarray
    actions: np.ndarray      # (S, H, A)

    def __len__(self):
        return len(self.curr_idx)

    @property
    def action_dim(self) -> int:
        return self.actions.shape[2]

    @property
    def proprio_dim(self) -> int:
        return self.frames_prop.shape[1]

    def batch(self, idx, k, eps, sched: NoiseSchedule) -> dict:
        a0 = self.actions[idx]
        nxt = self.next_idx[idx]
        return {
            "pts_prev": self.frames_pts[self.prev_idx[idx]],
            "prop_prev": self.frames_prop[self.prev_idx[idx]],
            "pts_curr": self.frames_pts[self.curr_idx[idx]],
            "prop_curr": self.frames_prop[self.curr_idx[idx]],
            "pts_next": self.frames_pts[nxt],
            "prop_next": self.frames_prop[nxt],
            "next_mask": self.next_mask[idx],
            "k": k,
            "a_noisy": forward_diffuse_batch(a0, k, eps, sched),
            "eps": eps,
        }


def build_samples(episodes, horizon: int, obs_fn=None, include_terminal: bool = False,
                  pad_fn=None) -> SampleSet:
    """One sample per action step: frames (t-1, t, t+1) and actions t..t+H-1.

    Windows running past the episode end are padded with ``pad_fn(last
    action)``, or the last action itself when ``pad_fn`` is None; frame t-1
    is clamped to the first frame. With ``include_terminal`` the final frame
    also yields a sample (no successor, so its consistency term is masked).
    ``obs_fn(points, proprio) -> (points, proprio)`` preprocesses each episode.
    """
    pts, prop = [], []
    prev_i, curr_i, next_i, mask, acts = [], [], [], [], []
    base = 0
    for ep in episodes:
        P = np.asarray(ep.points, dtype=np.float64)
        R = np.asarray(ep.proprio, dtype=np.float64)
        A = np.asarray(ep.actions, dtype=np.float64)
        if obs_fn is not None:
            P, R = obs_fn(P, R)
        n_frames, n_act = len(P), len(A)
        if n_act < 1 or n_frames != n_act + 1:
            raise ValueError("episode needs len(observations) == len(actions) + 1 >= 2")
        pts.append(P)
        prop.append(R)
        pad = A[-1] if pad_fn is None else np.asarray(pad_fn(A[-1]), dtype=np.float64)
        last_t = n_frames - 1 if include_terminal else n_act - 1
        for t in range(last_t + 1):
            prev_i.append(base + max(t - 1, 0))
            curr_i.append(base + t)
            has_next = t + 1 < n_frames
            next_i.append(base + (t + 1 if has_next else t))
            mask.append(1.0 if has_next else 0.0)
            window = [A[t + j] if t + j < n_act else pad for j in range(horizon)]
            acts.append(window)
        base += n_frames
    if not curr_i:
        raise ValueError("no training samples (empty dataset)")
    return SampleSet(np.concatenate(pts), np.concatenate(prop), np.array(prev_i), np.array(curr_i),
                     np.array(next_i), np.array(mask), np.array(acts, dtype=np.float64))


# --- checkpoint ---------------------------------------------------------------------

CKPT_MAGIC = b"FDCK"
CKPT_VERSION = 1


@dataclass
class PolicyCheckpoint:
    pcfg: PerceptionConfig
    dcfg: DenoiserConfig
    tcfg: TrainConfig
    params: ParamStore
    ema: ParamStore
    step: int = 0
    extras: dict = field(default_factory=dict)       # extra named arrays (normalizer stats)
    meta: dict = field(default_factory=dict)

    @property
    def schedule(self) -> NoiseSchedule:
        return make_schedule(self.tcfg.schedule, self.tcfg.diffusion_steps)

    def net(self, use_ema: bool = True) -> PolicyNet:
        return PolicyNet(self.pcfg, self.dcfg, self.ema if use_ema else self.params,
                         detach_current=self.tcfg.detach_current)

    def header(self) -> dict:
        return {"perception": asdict(self.pcfg), "denoiser": self.dcfg.to_dict(),
                "train": self.tcfg.to_dict(), "step": self.step, "meta": self.meta,
                "schedule": self.schedule.to_dict()}

    def to_bytes(self) -> bytes:
        sections = [(f"live/{n}", v) for n, v in self.params.items()]
        sections += [(f"ema/{n}", v) for n, v in self.ema.items()]
        sections += [(f"extra/{n}", np.asarray(v)) for n, v in sorted(self.extras.items())]
        blobs, table, pos = [], [], 0
        for name, arr in sections:
            b = dumps_array(arr)
            table.append({"name": name, "offset": pos, "nbytes": len(b)})
            blobs.append(b)
            pos += len(b)
        head = self.header()
        head["sections"] = table
        hb = json.dumps(head, sort_keys=True).encode()
        return CKPT_MAGIC + struct.pack("<IQ", CKPT_VERSION, len(hb)) + hb + b"".join(blobs)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def from_bytes(cls, buf: bytes) -> "PolicyCheckpoint":
        if buf[:4] != CKPT_MAGIC:
            raise ValueError("not a policy checkpoint (bad magic)")
        version, hlen = struct.unpack_from("<IQ", buf, 4)
        if version != CKPT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        start = 16
        head = json.loads(buf[start:start + hlen])
        base = start + hlen
        live, ema, extras = {}, {}, {}
        for sec in head["sections"]:
            arr, _ = loads_array(buf, base + sec["offset"])
            kind, _, name = sec["name"].partition("/")
            {"live": live, "ema": ema, "extra": extras}[kind][name] = arr
        pcfg = PerceptionConfig(**head["perception"])
        dcfg = DenoiserConfig(**head["denoiser"])
        tcfg = TrainConfig.from_dict(head["train"])
        return cls(pcfg, dcfg, tcfg, ParamStore(live), ParamStore(ema), head["step"], extras,
                   head.get("meta", {}))

    @classmethod
    def load(cls, path) -> "PolicyCheckpoint":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def init_checkpoint(pcfg: PerceptionConfig, dcfg: DenoiserConfig, tcfg: TrainConfig) -> PolicyCheckpoint:
    rng = np.random.default_rng([tcfg.seed, 0])
    arrays = {**init_perception(pcfg, rng), **init_denoiser(dcfg, rng)}
    params = ParamStore(arrays)
    return PolicyCheckpoint(pcfg, dcfg, tcfg, params, params.copy())


def diffusion_loss(samples: SampleSet, ckpt: PolicyCheckpoint, rng: np.random.Generator,
                   idx=None) -> float:
    """Denoising MSE over a batch with freshly drawn steps and noise (live weights)."""
    idx = np.arange(len(samples)) if idx is None else np.asarray(idx)
    if len(idx) == 0:
        raise ValueError("empty batch")
    sched = ckpt.schedule
    k = rng.integers(1, sched.T + 1, size=len(idx))
    eps = rng.standard_normal((len(idx),) + samples.actions.shape[1:])
    vals, _ = ckpt.net(use_ema=False).loss_and_grads(samples.batch(idx, k, eps, sched), 0.0)
    return vals["l_diff"]


# --- training loop ------------------------------------------------------------------

EpochCallback = Callable[[int, PolicyCheckpoint, dict], None]


def train(samples: SampleSet, tcfg: TrainConfig, dcfg: DenoiserConfig,
          pcfg: PerceptionConfig | None = None, callback: EpochCallback | None = None,
          extras: dict | None = None) -> PolicyCheckpoint:
    """Run AdamW on ``L_diff + beta * L_cons``; returns the final checkpoint.

    ``callback(epoch, ckpt, stats)`` fires after every epoch (1-based).
    Deterministic for a fixed ``tcfg.seed``.
    """
    if len(samples) == 0:
        raise ValueError("training set is empty")
    pcfg = pcfg or PerceptionConfig(proprio_dim=samples.proprio_dim, max_step=tcfg.diffusion_steps)
    if samples.action_dim != dcfg.action_dim:
        raise ValueError(f"dataset action dim {samples.action_dim} != denoiser action dim {dcfg.action_dim}")
    if samples.actions.shape[1] != dcfg.horizon:
        raise ValueError(f"dataset horizon {samples.actions.shape[1]} != denoiser horizon {dcfg.horizon}")
    if samples.proprio_dim != pcfg.proprio_dim:
        raise ValueError(f"dataset proprio width {samples.proprio_dim} != encoder width {pcfg.proprio_dim}")
    if pcfg.max_step != tcfg.diffusion_steps:
        raise ValueError("perception timestep table must cover every diffusion step")

    ckpt = init_checkpoint(pcfg, dcfg, tcfg)
    ckpt.extras = dict(extras or {})
    net = ckpt.net(use_ema=False)
    sched = ckpt.schedule
    opt = AdamW(ckpt.params.size, tcfg.adam_betas, tcfg.adam_eps, tcfg.weight_decay)
    rng = np.random.default_rng([tcfg.seed, 1])
    n = len(samples)
    per_epoch = -(-n // tcfg.batch)
    total_steps = tcfg.epochs * per_epoch
    step = 0
    for epoch in range(1, tcfg.epochs + 1):
        order = rng.permutation(n)
        sums = {"l_diff": 0.0, "l_cons": 0.0, "total": 0.0}
        for b in range(per_epoch):
            idx = order[b * tcfg.batch:(b + 1) * tcfg.batch]
            k = rng.integers(1, sched.T + 1, size=len(idx))
            eps = rng.standard_normal((len(idx),) + samples.actions.shape[1:])
            beta = tcfg.beta_mode.at(step)
            try:
                vals, grads = net.loss_and_grads(samples.batch(idx, k, eps, sched), beta)
            except NonFiniteError as exc:
                raise FloatingPointError(f"non-finite loss at step {step}: {exc}") from None
            if not math.isfinite(vals["total"]):
                raise FloatingPointError(f"non-finite loss at step {step}")
            lr = lr_at(step, total_steps, tcfg.lr, tcfg.warmup_steps)
            opt.step(ckpt.params.flat, ckpt.params.flatten_grads(grads), lr)
            ema_update(ckpt.ema.flat, ckpt.params.flat, ema_decay_at(step, tcfg.ema_decay, tcfg.ema_warmup))
            step += 1
            for key in sums:
                sums[key] += vals[key] * len(idx)
        ckpt.step = step
        stats = {key: v / n for key, v in sums.items()}
        stats.update(lr=lr, step=step, beta=beta)
        if callback is not None:
            callback(epoch, ckpt, stats)
    return ckpt


def with_seed(tcfg: TrainConfig, seed: int) -> TrainConfig:
    return replace(tcfg, seed=seed)
