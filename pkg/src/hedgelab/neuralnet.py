"""Hedging policy network, Adam, and the training loop minimizing -u(PL).

The policy is one shared 4-affine-layer MLP (3 hidden width-32 blocks of
affine -> layer norm -> ReLU, then a linear head) applied at every
hedging step; time-to-maturity rides in as a feature, so step-batching
collapses into a single matmul per layer.  The final layer starts at
zero: epoch 0 is exactly the unhedged position, which keeps tail-based
measures (CVaR) from thrashing during warm-up.

The reverse-mode graph machinery lives in ``autodiff`` and is re-exported
here as part of this module's surface.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .autodiff import (Tensor, concat, data_of, exp, log, mean, relu, sqrt,
                       tsum)
from .hedge_core import VolConfig, features_matrix, pl_core
from .instruments import OptionSpec, payoff_batch
from .risk import RiskMeasure, indifference_price, utility

__all__ = ["Tensor", "concat", "data_of", "exp", "log", "mean", "relu",
           "sqrt", "tsum", "MlpPolicy", "Adam", "TrainReport", "forward",
           "gradients", "train", "save_policy", "load_policy",
           "write_report_csv"]

HIDDEN_WIDTH = 32
LN_EPS = 1e-5
CHECKPOINT_VERSION = 1


def _layer_norm(h: Tensor, gain: Tensor, bias: Tensor) -> Tensor:
    mu = h.mean(axis=1, keepdims=True)
    centered = h - mu
    var = (centered * centered).mean(axis=1, keepdims=True)
    return centered / (var + LN_EPS).sqrt() * gain + bias


class MlpPolicy:
    """Width-32 MLP mapping a per-step feature row to one position."""

    def __init__(self, in_width: int, seed: int = 0):
        if in_width < 1:
            raise ValueError("in_width must be >= 1")
        self.in_width = in_width
        rng = np.random.default_rng(seed)
        w = HIDDEN_WIDTH

        def affine(fan_in, fan_out):
            bound = np.sqrt(6.0 / fan_in)
            return (Tensor(rng.uniform(-bound, bound, (fan_in, fan_out)),
                           requires_grad=True),
                    Tensor(np.zeros(fan_out), requires_grad=True))

        self.params = []
        self._layers = []
        fan = in_width
        for _ in range(3):
            wt, bt = affine(fan, w)
            gain = Tensor(np.ones(w), requires_grad=True)
            bias = Tensor(np.zeros(w), requires_grad=True)
            self._layers.append((wt, bt, gain, bias))
            self.params += [wt, bt, gain, bias]
            fan = w
        # zero head: the untrained policy holds no position
        head_w = Tensor(np.zeros((w, 1)), requires_grad=True)
        head_b = Tensor(np.zeros(1), requires_grad=True)
        self._layers.append((head_w, head_b))
        self.params += [head_w, head_b]

    def __call__(self, x) -> Tensor:
        """Graph-building forward pass; x is (batch, in_width)."""
        if not isinstance(x, Tensor):
            x = Tensor(x)
        if x.data.ndim != 2 or x.data.shape[1] != self.in_width:
            raise ValueError(
                f"expected (batch, {self.in_width}) features, got {x.data.shape}")
        h = x
        for wt, bt, gain, bias in self._layers[:-1]:
            h = _layer_norm(h @ wt + bt, gain, bias).relu()
        head_w, head_b = self._layers[-1]
        return (h @ head_w + head_b).reshape(-1)

    def forward_np(self, x: np.ndarray) -> np.ndarray:
        """Graph-free twin of __call__ for evaluation loops."""
        if x.ndim != 2 or x.shape[1] != self.in_width:
            raise ValueError(
                f"expected (batch, {self.in_width}) features, got {x.shape}")
        h = x
        for wt, bt, gain, bias in self._layers[:-1]:
            h = h @ wt.data + bt.data
            mu = h.mean(axis=1, keepdims=True)
            centered = h - mu
            var = (centered * centered).mean(axis=1, keepdims=True)
            h = centered / np.sqrt(var + LN_EPS) * gain.data + bias.data
            h = np.maximum(h, 0.0)
        head_w, head_b = self._layers[-1]
        return (h @ head_w.data + head_b.data).reshape(-1)

    def get_state(self) -> list:
        return [p.data.copy() for p in self.params]

    def set_state(self, state) -> None:
        if len(state) != len(self.params):
            raise ValueError("state length mismatch")
        for p, arr in zip(self.params, state):
            if p.data.shape != arr.shape:
                raise ValueError("state shape mismatch")
            p.data = np.asarray(arr, dtype=float)


def forward(policy: MlpPolicy, features: np.ndarray) -> np.ndarray:
    """Position batch for a feature batch (no graph)."""
    return policy.forward_np(np.asarray(features, dtype=float))


def gradients(loss: Tensor, params) -> list:
    """Reverse-mode dloss/dp for each parameter; loss must be scalar."""
    for p in params:
        p.grad = None
    loss.backward()
    return [np.zeros_like(p.data) if p.grad is None else p.grad.copy()
            for p in params]


class Adam:
    def __init__(self, params, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError("lr must be positive")
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if g is None:
                continue
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def get_state(self):
        return self.t, [m.copy() for m in self.m], [v.copy() for v in self.v]

    def set_state(self, state) -> None:
        self.t, ms, vs = state[0], state[1], state[2]
        self.m = [m.copy() for m in ms]
        self.v = [v.copy() for v in vs]


@dataclass
class TrainReport:
    val_prices: list = field(default_factory=list)   # one per epoch (nan: aborted)
    train_losses: list = field(default_factory=list)
    best_epoch: int = -1
    best_price: float = float("nan")
    diagnostics: list = field(default_factory=list)


def _policy_pl(policy, paths, feats, payoffs, cost_rate, build_graph):
    n_steps = paths.shape[1] - 1
    flat = feats.reshape(-1, feats.shape[2])
    if build_graph:
        deltas = policy(flat).reshape(paths.shape[0], n_steps)
    else:
        deltas = policy.forward_np(flat).reshape(paths.shape[0], n_steps)
    pl, _, _ = pl_core(paths, deltas, payoffs, cost_rate)
    return pl


def train(policy: MlpPolicy, paths: np.ndarray, spec: OptionSpec,
          measure: RiskMeasure, lr: float, epochs: int,
          minibatch: int = 256, seed: int = 0, cost_rate: float = 0.0,
          val_split: float = 0.2, vol_cfg: Optional[VolConfig] = None):
    """Minimize -u(PL) over paths with Adam; keep the best-epoch weights.

    Paths are split train/validation by index (last val_split fraction);
    every epoch reshuffles the training paths, and the objective tracked
    for model selection is the indifference price on the validation set
    (lower means the book needs less premium, i.e. hedges better).  A
    non-finite minibatch loss aborts the epoch and rolls parameters and
    optimizer back to the last finite epoch.  Returns (policy, report)
    with the best-epoch parameters installed.
    """
    paths = np.asarray(paths, dtype=float)
    if paths.ndim != 2 or paths.shape[0] < 1 or paths.shape[1] < 2:
        raise ValueError("paths must be (n_paths, n_steps+1) with n_steps >= 1")
    if not (0.0 <= val_split < 1.0):
        raise ValueError("val_split must lie in [0, 1)")
    vol_cfg = vol_cfg or VolConfig()

    n = paths.shape[0]
    n_val = int(round(val_split * n))
    if n_val == 0 or n_val == n:
        train_paths = val_paths = paths  # too few paths to split; validate in-sample
    else:
        train_paths, val_paths = paths[:-n_val], paths[-n_val:]

    feats_tr = features_matrix(train_paths, spec, vol_cfg)
    feats_va = features_matrix(val_paths, spec, vol_cfg)
    pay_tr = payoff_batch(spec, train_paths)
    pay_va = payoff_batch(spec, val_paths)

    report = TrainReport()
    if epochs == 0:
        return policy, report

    opt = Adam(policy.params, lr)
    rng = np.random.default_rng(seed)
    n_tr = train_paths.shape[0]
    bs = max(1, min(minibatch, n_tr))

    best_state = policy.get_state()
    finite_state = policy.get_state()
    finite_opt = opt.get_state()

    for epoch in range(epochs):
        order = rng.permutation(n_tr)
        aborted = False
        for lo in range(0, n_tr, bs):
            idx = order[lo:lo + bs]
            pl = _policy_pl(policy, train_paths[idx], feats_tr[idx],
                            pay_tr[idx], cost_rate, build_graph=True)
            loss = -utility(pl, measure)
            if not np.isfinite(loss.data):
                policy.set_state(finite_state)
                opt.set_state(finite_opt)
                report.diagnostics.append(
                    f"epoch {epoch}: non-finite loss, rolled back")
                aborted = True
                break
            opt.zero_grad()
            loss.backward()
            opt.step()

        if aborted:
            report.val_prices.append(float("nan"))
            report.train_losses.append(float("nan"))
            continue

        pl_tr = _policy_pl(policy, train_paths, feats_tr, pay_tr,
                           cost_rate, build_graph=False)
        pl_va = _policy_pl(policy, val_paths, feats_va, pay_va,
                           cost_rate, build_graph=False)
        train_loss = -utility(pl_tr, measure)
        val_price = indifference_price(pl_va, measure)
        if not (np.isfinite(train_loss) and np.isfinite(val_price)):
            policy.set_state(finite_state)
            opt.set_state(finite_opt)
            report.diagnostics.append(
                f"epoch {epoch}: non-finite evaluation, rolled back")
            report.val_prices.append(float("nan"))
            report.train_losses.append(float("nan"))
            continue

        report.val_prices.append(float(val_price))
        report.train_losses.append(float(train_loss))
        finite_state = policy.get_state()
        finite_opt = opt.get_state()
        if report.best_epoch < 0 or val_price < report.best_price:
            report.best_epoch = epoch
            report.best_price = float(val_price)
            best_state = policy.get_state()

    policy.set_state(best_state)
    return policy, report


def save_policy(policy: MlpPolicy, path, config_hash: str = "") -> None:
    """Versioned npz checkpoint with embedded metadata."""
    meta = json.dumps({"version": CHECKPOINT_VERSION,
                       "in_width": policy.in_width,
                       "config_hash": config_hash})
    arrays = {f"p{i}": p.data for i, p in enumerate(policy.params)}
    np.savez(path, meta=np.frombuffer(meta.encode(), dtype=np.uint8), **arrays)


def load_policy(path):
    """Returns (policy, metadata dict)."""
    with np.load(path) as blob:
        meta = json.loads(bytes(blob["meta"]).decode())
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        policy = MlpPolicy(meta["in_width"])
        policy.set_state([blob[f"p{i}"] for i in range(len(policy.params))])
    return policy, meta


def write_report_csv(report: TrainReport, path) -> None:
    """epoch,val_price rows for external plotting."""
    with open(path, "w", newline="") as fh:
        fh.write("epoch,val_price\n")
        for i, vp in enumerate(report.val_prices):
            fh.write(f"{i},{repr(vp)}\n")
