"""Diffusion policies conditioned on a predicted next-step scene feature."""
from .estimator import ForeDiffusionPolicy
from .harness.protocol import EvalProtocol, RunReport, evaluate
from .trainer import PolicyCheckpoint, TrainConfig, train

__version__ = "0.1.0"

__all__ = ["ForeDiffusionPolicy", "EvalProtocol", "RunReport", "evaluate", "PolicyCheckpoint",
           "TrainConfig", "train"]
