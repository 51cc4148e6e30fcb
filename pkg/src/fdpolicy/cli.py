"""``fd`` command-line entry point."""
from __future__ import annotations

import argparse
import glob
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .envs import KINDS, ToyTask, generate_demos, load_demos
from .harness.ablation import AXES, RunConfig, run_ablation, train_and_track
from .harness.protocol import EvalProtocol, evaluate
from .harness.report import FORMATS, export_report, load_reports
from .harness.rollout import eval_seeds, rollout_batch
from .schedule import dump_schedule_csv, make_schedule
from .trainer import PolicyCheckpoint

log = logging.getLogger("fdpolicy")


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def cmd_gen_demos(args) -> int:
    eps = generate_demos(args.task, args.n, args.seed, args.out)
    steps = sum(len(e) for e in eps)
    print(f"wrote {len(eps)} episodes ({steps} steps) of {ToyTask(args.task).kind} to {args.out}")
    return 0


def cmd_train(args) -> int:
    episodes = load_demos(args.demos)
    if episodes[0].kind != ToyTask(args.task).kind:
        raise SystemExit(f"dataset holds {episodes[0].kind!r} demos, not {args.task!r}")
    cfg = RunConfig(task=args.task, n_demos=len(episodes), injection=args.injection,
                    beta_mode=args.beta_mode, epochs=args.epochs, batch=args.batch)
    protocol = None
    if args.rollouts:
        protocol = EvalProtocol(seeds=(args.seed,), epochs=args.epochs, eval_every=args.eval_every or args.epochs,
                                rollouts=args.rollouts, top_k=1)
    out = Path(args.out)
    metrics = out.with_suffix(".metrics.jsonl")
    if metrics.exists():
        metrics.unlink()
    events, ckpt = train_and_track(cfg, args.seed, protocol, episodes,
                                   metrics if args.rollouts else None)
    ckpt.save(out)
    print(f"saved {out} after {ckpt.step} steps; eval events {events}")
    return 0


def cmd_eval(args) -> int:
    paths = sorted(set(glob.glob(args.ckpt))) or ([args.ckpt] if Path(args.ckpt).exists() else [])
    if not paths:
        raise SystemExit(f"no checkpoints match {args.ckpt!r}")
    task = ToyTask(args.task)
    env_seeds = eval_seeds(args.rollouts)
    streams: dict[int, list] = {}
    for p in paths:
        ck = PolicyCheckpoint.load(p)
        res = rollout_batch(ck, task, env_seeds)
        rate = float(np.mean([ok for ok, _ in res]))
        epoch = int(ck.meta.get("epoch", ck.step))
        streams.setdefault(ck.tcfg.seed, []).append((epoch, rate))
        print(f"{p}: seed={ck.tcfg.seed} epoch={epoch} success={rate:.3f}")
    if args.seeds:
        missing = [s for s in _int_list(args.seeds) if s not in streams]
        if missing:
            raise SystemExit(f"no checkpoints for training seeds {missing}")
        streams = {s: streams[s] for s in _int_list(args.seeds)}
    n_events = min(len(v) for v in streams.values())
    protocol = EvalProtocol(seeds=tuple(streams), epochs=max(n_events, args.top_k), eval_every=1,
                            rollouts=args.rollouts, top_k=args.top_k)
    report = evaluate(streams, task.kind, protocol, {"checkpoints": paths})
    export_report([report], args.out, FORMATS)
    print(f"score {report.mean:.3f} +/- {report.std:.3f} (population std over {len(streams)} seeds)")
    return 0


def cmd_ablate(args) -> int:
    protocol = EvalProtocol(seeds=tuple(_int_list(args.seeds)), epochs=args.epochs, eval_every=args.eval_every,
                            rollouts=args.rollouts, top_k=args.top_k)
    base = RunConfig(task=args.task, n_demos=args.demos, epochs=args.epochs)
    values = None
    if args.values:
        values = [v for v in args.values.split(";")] if args.axis == "beta" else args.values.split(",")
    reports = run_ablation(args.axis, base, [args.task], protocol, args.out, values)
    export_report(reports, args.out, FORMATS)
    for r in reports:
        print(f"{r.task:14s} {r.axis}={r.value:18s} {r.mean:.3f} +/- {r.std:.3f}")
    return 0


def cmd_report(args) -> int:
    formats = tuple(f.strip() for f in args.format.split(",") if f.strip())
    reports = load_reports(args.inp)
    out = args.out or (args.inp if Path(args.inp).is_dir() else Path(args.inp).parent)
    for p in export_report(reports, out, formats):
        print(p)
    return 0


def cmd_schedule_dump(args) -> int:
    dump_schedule_csv(make_schedule(args.kind, args.T), args.out)
    print(f"wrote {args.kind} schedule (T={args.T}) to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fd", description="Foresight-conditioned diffusion policy toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-demos", help="roll the scripted expert and write a demo dataset")
    g.add_argument("--task", required=True, choices=KINDS)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_demos)

    t = sub.add_parser("train", help="train one policy on a demo dataset")
    t.add_argument("--task", required=True, choices=KINDS)
    t.add_argument("--demos", required=True)
    t.add_argument("--injection", default="mid", choices=("none", "early", "mid"))
    t.add_argument("--beta-mode", default="fixed:0.1")
    t.add_argument("--epochs", type=int, default=300)
    t.add_argument("--batch", type=int, default=32)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True)
    t.add_argument("--eval-every", type=int, default=0, help="epochs between rollout evals (0: only at the end)")
    t.add_argument("--rollouts", type=int, default=0, help="rollouts per eval (0: no evaluation)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate checkpoints with the top-k protocol")
    e.add_argument("--ckpt", required=True, help="path or glob")
    e.add_argument("--task", required=True, choices=KINDS)
    e.add_argument("--seeds", default="")
    e.add_argument("--rollouts", type=int, default=15)
    e.add_argument("--top-k", type=int, default=5)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("ablate", help="train and evaluate one value per axis setting")
    a.add_argument("--axis", required=True, choices=sorted(AXES))
    a.add_argument("--task", required=True, choices=KINDS)
    a.add_argument("--out", required=True)
    a.add_argument("--values", default="", help="override axis values (';'-separated for beta)")
    a.add_argument("--demos", type=int, default=20)
    a.add_argument("--epochs", type=int, default=300)
    a.add_argument("--eval-every", type=int, default=20)
    a.add_argument("--rollouts", type=int, default=15)
    a.add_argument("--top-k", type=int, default=5)
    a.add_argument("--seeds", default="0,1,2")
    a.set_defaults(func=cmd_ablate)

    r = sub.add_parser("report", help="export CSV/JSON/SVG from saved run reports")
    r.add_argument("--in", dest="inp", required=True)
    r.add_argument("--format", default="csv,json,svg")
    r.add_argument("--out", default=None)
    r.set_defaults(func=cmd_report)

    s = sub.add_parser("schedule-dump", help="write a noise schedule table as CSV")
    s.add_argument("--kind", default="cosine", choices=("linear", "cosine"))
    s.add_argument("--T", type=int, default=100)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_schedule_dump)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"fd: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
