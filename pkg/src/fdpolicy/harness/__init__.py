from .ablation import RunConfig, run_ablation, run_config, train_and_track
from .protocol import EvalProtocol, RunReport, evaluate, fingerprint, top_k_score
from .report import export_report, load_reports
from .rollout import ExpertOracle, eval_seeds, rollout, rollout_batch

__all__ = ["RunConfig", "run_ablation", "run_config", "train_and_track", "EvalProtocol", "RunReport",
           "evaluate", "fingerprint", "top_k_score", "export_report", "load_reports", "ExpertOracle",
           "eval_seeds", "rollout", "rollout_batch"]
