"""Train-and-evaluate runs and single-axis ablations over them."""
from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from ..agent import fit_normalizer, observation_fn
from ..denoiser import DenoiserConfig
from ..envs import ToyTask, collect_demos, hold_action
from ..trainer import TrainConfig, build_samples, train
from .protocol import EvalProtocol, RunReport, evaluate, fingerprint
from .rollout import eval_seeds, rollout_batch

log = logging.getLogger(__name__)

AXES = {
    "injection": ("injection", ("none", "early", "mid")),
    "beta": ("beta_mode", ("off", "dynamic:0.1,0.002", "fixed:0.01", "fixed:0.1", "fixed:0.5", "fixed:1.0")),
    "demos": ("n_demos", (1, 5, 10, 20, 50)),
}


@dataclass(frozen=True)
class RunConfig:
    """Everything that defines one training run except the seed."""

    task: str
    n_demos: int = 20
    demo_seed: int = 0
    injection: str = "mid"
    beta_mode: str = "fixed:0.1"
    epochs: int = 300
    batch: int = 32
    horizon: int = 8
    lr: float = 1e-4
    warmup_steps: int = 500
    ema_decay: float = 0.999
    egocentric: bool = True

    def __post_init__(self):
        object.__setattr__(self, "task", ToyTask(self.task).kind)

    def to_dict(self) -> dict:
        return asdict(self)

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(lr=self.lr, warmup_steps=self.warmup_steps, epochs=self.epochs, batch=self.batch,
                           beta_mode=self.beta_mode, ema_decay=self.ema_decay, seed=seed)

    def denoiser_config(self) -> DenoiserConfig:
        return DenoiserConfig(action_dim=ToyTask(self.task).action_dim, horizon=self.horizon,
                              injection=self.injection)


def n_workers() -> int:
    """Worker bound from ``FD_THREADS`` (default: logical cores)."""
    raw = os.environ.get("FD_THREADS")
    n = int(raw) if raw else (os.cpu_count() or 1)
    if n < 1:
        raise ValueError("FD_THREADS must be >= 1")
    return n


def code_version() -> str:
    """Hash of the package sources, so cached results expire with code changes."""
    root = Path(__file__).resolve().parents[1]
    h = hashlib.sha256()
    for p in sorted(root.rglob("*.py")):
        h.update(p.relative_to(root).as_posix().encode())
        h.update(p.read_bytes())
    return h.hexdigest()[:16]


def train_and_track(cfg: RunConfig, seed: int, protocol: EvalProtocol | None, episodes=None,
                    metrics_path=None):
    """Train one seed, evaluating every ``protocol.eval_every`` epochs.

    Returns ``(events, checkpoint)`` with events ``[(epoch, success_rate)]``.
    Each eval event is appended to ``metrics_path`` as one JSON line.
    With ``protocol=None`` it trains for ``cfg.epochs`` without evaluating.
    """
    task = ToyTask(cfg.task)
    if episodes is None:
        episodes = collect_demos(task, cfg.n_demos, cfg.demo_seed)
    stats = fit_normalizer(episodes, cfg.egocentric)
    samples = build_samples(episodes, cfg.horizon, observation_fn(stats), pad_fn=hold_action)
    epochs = cfg.epochs if protocol is None else protocol.epochs
    tcfg = replace(cfg.train_config(seed), epochs=epochs)
    env_seeds = eval_seeds(protocol.rollouts) if protocol else []
    events = []
    sink = open(metrics_path, "a") if metrics_path else None

    def on_epoch(epoch, ckpt, stats_):
        if protocol is None or epoch % protocol.eval_every:
            return
        results = rollout_batch(ckpt, task, env_seeds, protocol.max_steps)
        rate = float(np.mean([ok for ok, _ in results]))
        events.append((epoch, rate))
        log.info("%s seed=%d epoch=%d success=%.3f l_diff=%.4f", cfg.task, seed, epoch, rate, stats_["l_diff"])
        if sink:
            rec = {"task": cfg.task, "seed": seed, "epoch": epoch, "success_rate": rate,
                   **{k: stats_[k] for k in ("l_diff", "l_cons", "total", "lr", "beta", "step")}}
            sink.write(json.dumps(rec, sort_keys=True) + "\n")
            sink.flush()

    try:
        ckpt = train(samples, tcfg, cfg.denoiser_config(), callback=on_epoch, extras=stats)
    finally:
        if sink:
            sink.close()
    ckpt.meta.update(run=cfg.to_dict(), epoch=epochs)
    return events, ckpt


def _seed_job(args):
    cfg, seed, protocol, episodes, metrics_path = args
    events, _ = train_and_track(cfg, seed, protocol, episodes, metrics_path)
    return seed, events


def run_config(cfg: RunConfig, protocol: EvalProtocol, out_dir=None, episodes=None,
               axis: str = "", value: str = "", workers: int | None = None) -> RunReport:
    """All protocol seeds for one config; cached under ``out_dir/runs`` when given."""
    key = fingerprint({"run": cfg.to_dict(), "protocol": protocol.to_dict(), "code": code_version()})
    cache = metrics = None
    if out_dir is not None:
        runs = Path(out_dir) / "runs"
        runs.mkdir(parents=True, exist_ok=True)
        cache = runs / f"{cfg.task}-{axis or 'run'}-{value or 'base'}-{key}.json"
        metrics = runs / f"{cfg.task}-{axis or 'run'}-{value or 'base'}-{key}.metrics.jsonl"
        hit = cache if cache.exists() else next(iter(sorted(runs.glob(f"*-{key}.json"))), None)
        if hit is not None:
            report = RunReport.from_dict(json.loads(hit.read_text()))
            report.axis, report.value = axis, value
            return report
        if metrics.exists():
            metrics.unlink()
    if episodes is None:
        episodes = collect_demos(cfg.task, cfg.n_demos, cfg.demo_seed)
    jobs = [(cfg, s, protocol, episodes, str(metrics) if metrics else None) for s in protocol.seeds]
    workers = min(workers or n_workers(), len(jobs))
    t0 = time.perf_counter()
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            streams = dict(pool.map(_seed_job, jobs))
    else:
        streams = dict(map(_seed_job, jobs))
    report = evaluate(streams, cfg.task, protocol, cfg.to_dict(), axis, value)
    report.wall_seconds = time.perf_counter() - t0
    if cache is not None:
        cache.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    return report


def axis_configs(axis: str, base: RunConfig, values=None) -> list[tuple[str, RunConfig]]:
    """``(label, config)`` per axis value; configs differ from ``base`` only in the axis field."""
    if axis not in AXES:
        raise ValueError(f"unknown axis {axis!r}; choose from {sorted(AXES)}")
    field_name, defaults = AXES[axis]
    vals = defaults if values is None else values
    return [(str(v), replace(base, **{field_name: type(getattr(base, field_name))(v)})) for v in vals]


def run_ablation(axis: str, base: RunConfig | dict, tasks, protocol: EvalProtocol | None = None,
                 out_dir=None, values=None, workers: int | None = None) -> list[RunReport]:
    """One report per (axis value, task), all other settings held at ``base``.

    The demo-count axis draws every count from one superset of expert
    episodes, so larger counts contain the smaller ones.
    """
    protocol = protocol or EvalProtocol()
    reports = []
    for task in tasks:
        task = ToyTask(task).kind
        tbase = replace(base, task=task) if isinstance(base, RunConfig) else RunConfig(task=task, **base)
        pairs = axis_configs(axis, tbase, values)
        n_max = max(c.n_demos for _, c in pairs)
        superset = collect_demos(task, n_max, tbase.demo_seed)
        for label, cfg in pairs:
            log.info("ablation %s=%s on %s", axis, label, task)
            reports.append(run_config(cfg, protocol, out_dir, superset[:cfg.n_demos], axis, label, workers))
    return reports
