"""Noise schedules and single-step forward/reverse diffusion updates.

Tables are 1-indexed by diffusion step ``t = 1..T``; ``alpha_bar(0) == 1``
stands for the clean sample.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

KINDS = ("linear", "cosine")


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    kind: str
    T: int
    alphas: np.ndarray      # alpha_t for t=1..T at index t-1
    alpha_bars: np.ndarray  # cumulative products, same indexing
    sigmas: np.ndarray      # ancestral sampler std ("small" variance)

    def alpha(self, t: int) -> float:
        self._check(t)
        return float(self.alphas[t - 1])

    def alpha_bar(self, t: int) -> float:
        if t == 0:
            return 1.0
        self._check(t)
        return float(self.alpha_bars[t - 1])

    def sigma(self, t: int) -> float:
        self._check(t)
        return float(self.sigmas[t - 1])

    def _check(self, t):
        if not 1 <= t <= self.T:
            raise ValueError(f"diffusion step {t} outside [1, {self.T}]")

    def inference_steps(self, n: int) -> list[tuple[int, int]]:
        """``n`` evenly strided (t, t_prev) pairs from T down to 0."""
        if not 1 <= n <= self.T:
            raise ValueError(f"inference step count {n} outside [1, {self.T}]")
        ts = [int(round(self.T * (n - i) / n)) for i in range(n + 1)]
        return list(zip(ts[:-1], ts[1:]))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "T": self.T}


def make_schedule(kind: str = "cosine", T: int = 100, beta_min: float | None = None,
                  beta_max: float | None = None) -> NoiseSchedule:
    """Build the alpha / alpha-bar / sigma tables.

    ``linear`` spaces beta evenly in ``[beta_min, beta_max]`` (defaults 1e-4,
    0.02). ``cosine`` is the squared-cosine alpha-bar curve with betas
    clipped into ``[beta_min, beta_max]`` (defaults 1e-4, 0.999).
    """
    if kind not in KINDS:
        raise ValueError(f"unknown schedule kind {kind!r}; expected one of {KINDS}")
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if kind == "linear":
        lo = 1e-4 if beta_min is None else beta_min
        hi = 0.02 if beta_max is None else beta_max
    else:
        lo = 1e-4 if beta_min is None else beta_min
        hi = 0.999 if beta_max is None else beta_max
    if not 0 < lo <= hi < 1:
        raise ValueError(f"need 0 < beta_min <= beta_max < 1, got {lo}, {hi}")

    if kind == "linear":
        betas = np.linspace(lo, hi, T) if T > 1 else np.array([hi])
    else:
        s = 0.008

        def f(u):
            return math.cos((u / T + s) / (1 + s) * math.pi / 2) ** 2

        betas = np.array([min(max(1 - f(t) / f(t - 1), lo), hi) for t in range(1, T + 1)])
    return schedule_from_alphas(1.0 - betas, kind)


def schedule_from_alphas(alphas, kind: str = "custom") -> NoiseSchedule:
    """Schedule from explicit per-step alphas (tests and diagnostics)."""
    alphas = np.asarray(alphas, dtype=np.float64)
    if alphas.ndim != 1 or alphas.size < 1 or np.any(alphas <= 0) or np.any(alphas > 1):
        raise ValueError("alphas must be a non-empty 1-D array in (0, 1]")
    betas = 1.0 - alphas
    alpha_bars = np.cumprod(alphas)
    prev = np.concatenate([[1.0], alpha_bars[:-1]])
    with np.errstate(invalid="ignore", divide="ignore"):
        sigmas = np.sqrt(np.where(alpha_bars < 1, (1 - prev) / (1 - alpha_bars) * betas, 0.0))
    return NoiseSchedule(kind, len(alphas), alphas, alpha_bars, sigmas)


def forward_diffuse(a0, t: int, noise, sched: NoiseSchedule):
    """Sample ``a_t`` from ``q(a_t | a_0)`` with the given noise.

    ``t = 0`` is accepted and returns ``a0`` unchanged.
    """
    a0, noise = np.asarray(a0, dtype=np.float64), np.asarray(noise, dtype=np.float64)
    if a0.shape != noise.shape:
        raise ValueError(f"noise shape {noise.shape} != sample shape {a0.shape}")
    ab = sched.alpha_bar(t)
    return math.sqrt(ab) * a0 + math.sqrt(1.0 - ab) * noise


def forward_diffuse_batch(a0, ts, noise, sched: NoiseSchedule):
    """Per-item steps ``ts`` (shape (B,)) over a batch ``a0`` (B, ...)."""
    ts = np.asarray(ts, dtype=np.int64)
    if ts.min() < 1 or ts.max() > sched.T:
        raise ValueError(f"diffusion steps must lie in [1, {sched.T}]")
    ab = sched.alpha_bars[ts - 1].reshape((-1,) + (1,) * (np.ndim(a0) - 1))
    return np.sqrt(ab) * a0 + np.sqrt(1.0 - ab) * noise


def ddpm_step(a_t, eps_pred, t: int, sched: NoiseSchedule, z=None, printed_prefactor: bool = False):
    """One ancestral reverse step ``a_t -> a_{t-1}``.

    ``printed_prefactor`` swaps the leading ``1/sqrt(alpha_t)`` for a bare
    ``alpha_t``; kept for diagnostics only, it does not invert the forward
    process.
    """
    a_t, eps_pred = np.asarray(a_t, dtype=np.float64), np.asarray(eps_pred, dtype=np.float64)
    if a_t.shape != eps_pred.shape:
        raise ValueError(f"eps_pred shape {eps_pred.shape} != a_t shape {a_t.shape}")
    al, ab, sig = sched.alpha(t), sched.alpha_bar(t), sched.sigma(t)
    lead = al if printed_prefactor else 1.0 / math.sqrt(al)
    out = lead * (a_t - (1.0 - al) / math.sqrt(1.0 - ab) * eps_pred)
    if z is not None:
        z = np.asarray(z, dtype=np.float64)
        if z.shape != a_t.shape:
            raise ValueError(f"z shape {z.shape} != a_t shape {a_t.shape}")
        out = out + sig * z
    return out


def ddim_sigma(ab_t: float, ab_prev: float, eta: float) -> float:
    return eta * math.sqrt((1 - ab_prev) / (1 - ab_t) * (1 - ab_t / ab_prev))


def ddim_step(a_t, eps_pred, t: int, t_prev: int, eta: float, sched: NoiseSchedule, z=None):
    """Strided DDIM update ``a_t -> a_{t_prev}``; ``eta=0`` is deterministic."""
    if t_prev >= t:
        raise ValueError(f"t_prev ({t_prev}) must be < t ({t})")
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    a_t, eps_pred = np.asarray(a_t, dtype=np.float64), np.asarray(eps_pred, dtype=np.float64)
    if a_t.shape != eps_pred.shape:
        raise ValueError(f"eps_pred shape {eps_pred.shape} != a_t shape {a_t.shape}")
    ab_t, ab_prev = sched.alpha_bar(t), sched.alpha_bar(t_prev)
    return _ddim(a_t, eps_pred, ab_t, ab_prev, eta, z)


def _ddim(a_t, eps_pred, ab_t, ab_prev, eta, z):
    x0 = (a_t - math.sqrt(1 - ab_t) * eps_pred) / math.sqrt(ab_t)
    sig = ddim_sigma(ab_t, ab_prev, eta) if ab_t < 1 else 0.0
    out = math.sqrt(ab_prev) * x0 + math.sqrt(max(1 - ab_prev - sig * sig, 0.0)) * eps_pred
    if sig > 0:
        if z is None:
            raise ValueError("eta > 0 requires a noise draw z")
        out = out + sig * np.asarray(z, dtype=np.float64)
    return out


def energy_descent_step(a, grad_E, gamma: float):
    """Move ``a`` against the energy gradient by step size ``gamma``."""
    a, grad_E = np.asarray(a, dtype=np.float64), np.asarray(grad_E, dtype=np.float64)
    if a.shape != grad_E.shape:
        raise ValueError(f"gradient shape {grad_E.shape} != action shape {a.shape}")
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    return a - gamma * grad_E


def dump_schedule_csv(sched: NoiseSchedule, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "alpha", "alpha_bar", "sigma"])
        for t in range(1, sched.T + 1):
            w.writerow([t, repr(sched.alpha(t)), repr(sched.alpha_bar(t)), repr(sched.sigma(t))])
