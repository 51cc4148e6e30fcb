"""Perception + denoiser wired into training and inference graphs."""
from __future__ import annotations

import numpy as np

from .denoiser import DenoiserConfig, build_denoiser, ddim_sample
from .params import ParamStore
from .perception import PerceptionConfig, build_conditions, build_constructor, build_perception
from .schedule import NoiseSchedule
from .tensor import Graph


class PolicyNet:
    """Graphs over one shared :class:`ParamStore`.

    * training: frames (t-1, t, t+1), noisy actions, true noise, beta ->
      ``l_diff``, ``l_cons``, ``total``;
    * perception: frames (t-1, t) -> ``f_cur``, ``f_cons``;
    * denoiser: ``f_cur``, ``f_cons``, step ``k``, noisy actions -> noise.
    """

    def __init__(self, pcfg: PerceptionConfig, dcfg: DenoiserConfig, params: ParamStore,
                 detach_current: bool = False):
        if dcfg.cond_width != pcfg.cond_dim:
            raise ValueError(f"denoiser cond width {dcfg.cond_width} != perception width {pcfg.cond_dim}")
        self.pcfg, self.dcfg, self.params = pcfg, dcfg, params
        self.detach_current = detach_current
        self._train = None
        self._percep = None
        self._den = None

    # -- training ---------------------------------------------------------------

    def _train_graph(self):
        if self._train is None:
            g = Graph()
            nodes = build_perception(g, self.params, self.pcfg, with_target=True,
                                     detach_current=self.detach_current)
            G, G_hat = build_conditions(g, nodes["f_cur"], nodes["f_cons"], g.input("k"), self.pcfg)
            eps_hat = build_denoiser(g, g.input("a_noisy"), G, G_hat, self.dcfg, self.params)
            l_diff = g.mse(eps_hat, g.input("eps"), name="l_diff")
            l_cons = g.mse(nodes["f_cons"], nodes["f_gt"], mask=g.input("next_mask"), name="l_cons")
            total = g.add(l_diff, g.mul(l_cons, g.input("beta")), name="total")
            nodes.update(G=G, G_hat=G_hat, eps_hat=eps_hat, l_diff=l_diff, l_cons=l_cons, total=total)
            self._train = (g, nodes)
        return self._train

    def train_graph(self):
        return self._train_graph()

    def loss_and_grads(self, batch: dict, beta: float, loss: str = "total", wrt=()):
        """Forward the training graph and differentiate ``loss``.

        ``batch`` keys: pts_prev, prop_prev, pts_curr, prop_curr, pts_next,
        prop_next, next_mask, k, a_noisy, eps.
        """
        g, nodes = self._train_graph()
        inputs = dict(batch)
        inputs["beta"] = np.array(float(beta))
        g.forward(inputs)
        grads = g.backward(nodes[loss], wrt=wrt)
        vals = {n: float(g.value(nodes[n])) for n in ("l_diff", "l_cons", "total")}
        return vals, grads

    # -- inference --------------------------------------------------------------

    def _percep_graph(self):
        if self._percep is None:
            g = Graph()
            nodes = build_perception(g, self.params, self.pcfg, detach_current=self.detach_current)
            self._percep = (g, nodes)
        return self._percep

    def _den_graph(self):
        if self._den is None:
            g = Graph()
            f_cur, f_cons = g.input("f_cur"), g.input("f_cons")
            G, G_hat = build_conditions(g, f_cur, f_cons, g.input("k"), self.pcfg)
            out = build_denoiser(g, g.input("a"), G, G_hat, self.dcfg, self.params)
            self._den = (g, out)
        return self._den

    def features(self, frames: dict, params=None):
        """``(f_cur, f_cons)`` for batched frames (pts_prev, prop_prev, pts_curr, prop_curr)."""
        g, nodes = self._percep_graph()
        g.forward(frames, params=params)
        return g.value(nodes["f_cur"]), g.value(nodes["f_cons"])

    def predict_eps(self, a, k, f_cur, f_cons, params=None):
        g, out = self._den_graph()
        ks = np.full(len(a), k) if np.ndim(k) == 0 else np.asarray(k)
        g.forward({"a": a, "k": ks, "f_cur": f_cur, "f_cons": f_cons}, params=params)
        return g.value(out)

    def sample(self, frames: dict, sched: NoiseSchedule, n_steps: int, init: np.ndarray,
               params=None, clip: float | None = 1.0) -> np.ndarray:
        """DDIM (eta=0) action sequences from initial noise ``init`` (B, H, A)."""
        f_cur, f_cons = self.features(frames, params)
        return ddim_sample(lambda a, t: self.predict_eps(a, t, f_cur, f_cons, params),
                           init.shape, sched, n_steps, init=init, clip=clip)

    def constructor_graph(self):
        g = Graph()
        out = build_constructor(g, g.input("f"), self.params)
        return g, out
