"""Evaluation protocol arithmetic and run reports."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field



@dataclass(frozen=True)
class EvalProtocol:
    seeds: tuple = (0, 1, 2)
    epochs: int = 300
    eval_every: int = 20
    rollouts: int = 15
    top_k: int = 5
    max_steps: int | None = None     # None: the task's own budget

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.eval_every < 1 or self.rollouts < 1 or self.top_k < 1:
            raise ValueError("eval_every, rollouts and top_k must be >= 1")
        if self.top_k > self.n_events:
            raise ValueError(f"top_k={self.top_k} exceeds the {self.n_events} eval events per run")

    @property
    def n_events(self) -> int:
        return self.epochs // self.eval_every

    @classmethod
    def full_scale(cls) -> "EvalProtocol":
        return cls(epochs=3000, eval_every=200)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        return d


def top_k_score(rates, k: int) -> float:
    """Mean of the ``k`` largest event success rates."""
    rates = [float(r) for r in rates]
    if len(rates) < k:
        raise ValueError(f"need at least top_k={k} eval events, got {len(rates)}")
    return sum(sorted(rates, reverse=True)[:k]) / k


def fingerprint(obj) -> str:
    """Stable hash of a JSON-serialisable config tree."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class RunReport:
    task: str
    config: dict
    top_k: int
    events: dict = field(default_factory=dict)   # seed -> [(epoch, success_rate), ...]
    axis: str = ""
    value: str = ""
    wall_seconds: float = 0.0

    def __post_init__(self):
        self.events = {int(s): [(int(e), float(r)) for e, r in ev] for s, ev in self.events.items()}
        for s, ev in self.events.items():
            if len(ev) < self.top_k:
                raise ValueError(f"seed {s}: {len(ev)} eval events < top_k={self.top_k}")

    @property
    def seed_scores(self) -> dict[int, float]:
        return {s: top_k_score([r for _, r in ev], self.top_k) for s, ev in sorted(self.events.items())}

    @property
    def mean(self) -> float:
        xs = list(self.seed_scores.values())
        return sum(xs) / len(xs)

    @property
    def std(self) -> float:
        """Population standard deviation over seeds.

        Written out rather than via ``np.std`` so the result does not hinge
        on a library's reduction order.
        """
        xs = list(self.seed_scores.values())
        m = sum(xs) / len(xs)
        return math.sqrt(sum((x - m) ** 2 for x in xs) / len(xs))

    @property
    def fingerprint(self) -> str:
        return fingerprint({"task": self.task, "config": self.config, "top_k": self.top_k})

    def to_dict(self) -> dict:
        return {"task": self.task, "axis": self.axis, "value": self.value, "config": self.config,
                "top_k": self.top_k, "fingerprint": self.fingerprint,
                "events": {str(s): [list(x) for x in ev] for s, ev in sorted(self.events.items())},
                "seed_scores": {str(s): v for s, v in self.seed_scores.items()},
                "mean": self.mean, "std": self.std, "std_convention": "population",
                "wall_seconds": self.wall_seconds}

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        return cls(d["task"], d["config"], d["top_k"], {int(s): ev for s, ev in d["events"].items()},
                   d.get("axis", ""), d.get("value", ""), d.get("wall_seconds", 0.0))


def evaluate(streams: dict, task: str, protocol: EvalProtocol, config: dict | None = None,
             axis: str = "", value: str = "") -> RunReport:
    """Aggregate per-seed ``[(epoch, success_rate)]`` streams into a report."""
    if not streams:
        raise ValueError("no eval streams")
    return RunReport(task, dict(config or {}), protocol.top_k, streams, axis, value)
