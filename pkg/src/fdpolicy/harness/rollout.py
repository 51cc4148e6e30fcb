"""Closed-loop rollouts with receding-horizon execution."""
from __future__ import annotations

import numpy as np

from ..agent import DiffusionAgent
from ..envs import DemonstrationEpisode, ToyTask, reset, scripted_expert, step
from ..trainer import PolicyCheckpoint

N_EXECUTE = 4
EVAL_SEED_BASE = 100_000    # far from the seeds used to generate demonstrations


class ExpertOracle:
    """Planner interface over the scripted expert, for harness self-tests.

    It plans by simulating the expert forward from the true state, so it
    obeys the same receding execution as a learned policy.
    """

    def __init__(self, task, horizon: int = 8):
        self.task = task if isinstance(task, ToyTask) else ToyTask(str(task))
        self.horizon = horizon
        self.action_dim = self.task.action_dim

    def plan_observations(self, states, prev_obs, curr_obs, inits):
        out = np.zeros((len(states), self.horizon, self.action_dim))
        for i, s in enumerate(states):
            for j in range(self.horizon):
                if s.done:
                    break
                a = scripted_expert(self.task, s)
                out[i, j] = a
                s, _, _, _ = step(s, a)
        return out


def _as_planner(policy):
    if isinstance(policy, PolicyCheckpoint):
        return DiffusionAgent(policy)
    return policy


def rollout_batch(policy, task, seeds, max_steps: int | None = None, n_execute: int = N_EXECUTE):
    """Run one episode per seed in lockstep; returns ``[(success, episode), ...]``.

    Every ``n_execute`` steps each live episode re-observes and plans a
    fresh action sequence. Initial noise for planning comes from a
    per-episode generator seeded by the episode seed, so results depend
    only on (policy, task, seed).
    """
    task = task if isinstance(task, ToyTask) else ToyTask(str(task))
    planner = _as_planner(policy)
    if planner.action_dim != task.action_dim:
        raise ValueError(f"policy action dim {planner.action_dim} != task action dim {task.action_dim}")
    budget = task.max_steps if max_steps is None else int(max_steps)
    if not 1 <= n_execute <= planner.horizon:
        raise ValueError(f"n_execute must lie in [1, {planner.horizon}]")
    H, A = planner.horizon, planner.action_dim

    n = len(seeds)
    states, prev, curr = [], [], []
    for s in seeds:
        st, ob = reset(task, s)
        states.append(st)
        prev.append(ob)
        curr.append(ob)
    rngs = [np.random.default_rng([int(s), 0x5EED]) for s in seeds]
    pts = [[o.points] for o in curr]
    prop = [[o.proprio] for o in curr]
    acts = [[] for _ in range(n)]
    queue = [[] for _ in range(n)]
    live = [budget > 0 for _ in range(n)]

    while any(live):
        need = [i for i in range(n) if live[i] and not queue[i]]
        if need:
            inits = [rngs[i].standard_normal((H, A)) for i in need]
            plans = planner.plan_observations([states[i] for i in need], [prev[i] for i in need],
                                              [curr[i] for i in need], inits)
            for i, plan in zip(need, plans):
                queue[i] = list(np.clip(plan[:n_execute], -1.0, 1.0))
        for i in range(n):
            if not live[i]:
                continue
            a = queue[i].pop(0)
            states[i], ob, done, _ = step(states[i], a)
            prev[i], curr[i] = curr[i], ob
            pts[i].append(ob.points)
            prop[i].append(ob.proprio)
            acts[i].append(a)
            if done or states[i].t >= budget:
                live[i] = False

    out = []
    for i, s in enumerate(seeds):
        a = np.array(acts[i]).reshape(len(acts[i]), A)
        ok = bool(states[i].success) and budget > 0
        out.append((ok, DemonstrationEpisode(task.kind, int(s), np.array(pts[i]), np.array(prop[i]), a, ok)))
    return out


def rollout(checkpoint, task, seed: int, max_steps: int | None = None):
    """Single closed-loop episode; returns ``(success, episode)``."""
    return rollout_batch(checkpoint, task, [seed], max_steps)[0]


def eval_seeds(n: int, base: int = EVAL_SEED_BASE) -> list[int]:
    return [base + i for i in range(n)]
