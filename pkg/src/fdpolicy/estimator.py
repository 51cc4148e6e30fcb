"""Scikit-learn style front end for training and querying the policy."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_is_fitted

from .agent import DiffusionAgent, fit_normalizer, observation_fn
from .denoiser import DenoiserConfig
from .envs import hold_action
from .perception import PerceptionConfig
from .trainer import PolicyCheckpoint, TrainConfig, build_samples, train
from .validation import check_episodes, check_pairs


class ForeDiffusionPolicy(TransformerMixin, BaseEstimator):
    """Diffusion policy conditioned on current and predicted next-step features.

    ``fit`` takes demonstration episodes (or a dataset path); ``predict``
    maps observation pairs to action sequences of shape
    ``(n, horizon, action_dim)`` using the EMA weights; ``transform``
    returns the 128-wide current feature of each pair.

    Parameters
    ----------
    injection : {"none", "early", "mid"}
        Where the predicted future condition enters the denoiser.
    beta_mode : str
        ``"off"``, ``"fixed:<beta>"`` or ``"dynamic:<beta_max>,<rate>"``.
    egocentric : bool
        Express point coordinates relative to the agent before encoding.
    """

    def __init__(self, injection="mid", beta_mode="fixed:0.1", epochs=300, batch_size=32, horizon=8,
                 n_action_steps=4, learning_rate=1e-4, warmup_steps=500, ema_decay=0.999,
                 diffusion_steps=100, inference_steps=10, schedule="cosine", egocentric=True,
                 detach_current=False, random_state=0):
        self.injection = injection
        self.beta_mode = beta_mode
        self.epochs = epochs
        self.batch_size = batch_size
        self.horizon = horizon
        self.n_action_steps = n_action_steps
        self.learning_rate = learning_rate
        self.warmup_steps = warmup_steps
        self.ema_decay = ema_decay
        self.diffusion_steps = diffusion_steps
        self.inference_steps = inference_steps
        self.schedule = schedule
        self.egocentric = egocentric
        self.detach_current = detach_current
        self.random_state = random_state

    def _train_config(self) -> TrainConfig:
        seed = self.random_state if isinstance(self.random_state, (int, np.integer)) else 0
        return TrainConfig(lr=self.learning_rate, warmup_steps=self.warmup_steps, epochs=self.epochs,
                           batch=self.batch_size, beta_mode=self.beta_mode, ema_decay=self.ema_decay,
                           seed=int(seed), diffusion_steps=self.diffusion_steps,
                           inference_steps=self.inference_steps, schedule=self.schedule,
                           detach_current=self.detach_current)

    def fit(self, X, y=None, callback=None):
        """Train on demonstration episodes; ``y`` is ignored (actions live in the episodes)."""
        episodes = check_episodes(X)
        if not 1 <= self.n_action_steps <= self.horizon:
            raise ValueError("n_action_steps must lie in [1, horizon]")
        tcfg = self._train_config()
        A = episodes[0].actions.shape[1]
        dcfg = DenoiserConfig(action_dim=A, horizon=self.horizon, injection=self.injection)
        pcfg = PerceptionConfig(proprio_dim=episodes[0].proprio.shape[1], max_step=self.diffusion_steps)
        stats = fit_normalizer(episodes, self.egocentric)
        samples = build_samples(episodes, self.horizon, observation_fn(stats), pad_fn=hold_action)
        ckpt = train(samples, tcfg, dcfg, pcfg, callback=callback, extras=stats)
        ckpt.meta["estimator"] = self.get_params()
        ckpt.meta["task"] = episodes[0].kind
        self._set_checkpoint(ckpt)
        return self

    def _set_checkpoint(self, ckpt: PolicyCheckpoint):
        self.checkpoint_ = ckpt
        self.agent_ = DiffusionAgent(ckpt)
        self.action_dim_ = ckpt.dcfg.action_dim
        self.proprio_dim_ = ckpt.pcfg.proprio_dim
        self.n_steps_trained_ = ckpt.step

    def _frames(self, X):
        check_is_fitted(self, "checkpoint_")
        batch = check_pairs(X)
        if batch["prop_curr"].shape[1] != self.proprio_dim_:
            raise ValueError(f"proprio width {batch['prop_curr'].shape[1]} != {self.proprio_dim_}")
        return self.agent_.frames(batch["pts_prev"], batch["prop_prev"], batch["pts_curr"], batch["prop_curr"])

    def predict(self, X, random_state=None) -> np.ndarray:
        """Action sequences ``(n, horizon, action_dim)`` sampled with eta=0 DDIM."""
        frames = self._frames(X)
        rng = check_random_state(self.random_state if random_state is None else random_state)
        init = rng.standard_normal((len(frames["pts_curr"]), self.horizon, self.action_dim_))
        return self.agent_.plan(frames, init)

    def act(self, X, random_state=None) -> np.ndarray:
        """The executed prefix ``(n, n_action_steps, action_dim)`` of each plan."""
        return np.clip(self.predict(X, random_state)[:, :self.n_action_steps], -1.0, 1.0)

    def transform(self, X) -> np.ndarray:
        """Current features ``(n, 128)``."""
        return self.agent_.features(self._frames(X))[0]

    def construct(self, X) -> np.ndarray:
        """Predicted next-step features ``(n, 128)``."""
        return self.agent_.features(self._frames(X))[1]

    def save(self, path) -> None:
        check_is_fitted(self, "checkpoint_")
        self.checkpoint_.save(path)

    @classmethod
    def from_checkpoint(cls, ckpt: PolicyCheckpoint) -> "ForeDiffusionPolicy":
        params = dict(ckpt.meta.get("estimator", {}))
        est = cls(**params) if params else cls(injection=ckpt.dcfg.injection, horizon=ckpt.dcfg.horizon)
        est._set_checkpoint(ckpt)
        return est

    @classmethod
    def load(cls, path) -> "ForeDiffusionPolicy":
        return cls.from_checkpoint(PolicyCheckpoint.load(path))
