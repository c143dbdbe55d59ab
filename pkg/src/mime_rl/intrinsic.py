"""Intrinsic reward generators.

All squared-error methods share one shape: a trainable network ``M`` and a
target that is either the raw observation or a frozen random feature map.

=============  ======================  ==========================
kind           model input             target
=============  ======================  ==========================
surprisal      (s, a)                  s_next  (or f(s_next))
mime           (s, a)                  s       (or f(s))
pred-improve   (s, a)                  s_next; reward is progress
rnd            s_next                  frozen_net(s_next)
=============  ======================  ==========================

With ``feature_mode="frozen-features"`` the model input uses ``f(s)`` in place
of ``s``; with ``"trainable-model-frozen-target"`` only the target goes through ``f``.
MIME never looks at ``s_next``; that is the whole point of the method.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .ndmath import Adam, Mlp, ShapeError, as_tensor, mlp_backward, mlp_forward

KINDS = ("none", "count", "surprisal", "mime", "pred-improve", "rnd")
FEATURE_MODES = ("raw", "frozen-features", "trainable-model-frozen-target")
MODEL_KINDS = ("surprisal", "mime", "pred-improve", "rnd")


@dataclass
class VisitCounter:
    bin_width: float = 0.05
    counts: dict = field(default_factory=dict)

    def key(self, state) -> tuple:
        return tuple(np.floor(np.asarray(state, dtype=np.float64) / self.bin_width).astype(np.int64).tolist())

    def visit(self, state) -> int:
        k = self.key(state)
        n = self.counts.get(k, 0) + 1
        self.counts[k] = n
        return n

    def count(self, state) -> int:
        return self.counts.get(self.key(state), 0)


def count_reward(counter: VisitCounter, state) -> float:
    """Record a visit and return ``1 / n`` where ``n`` includes this visit."""
    return 1.0 / counter.visit(state)


def make_frozen_features(seed: int, obs_dim: int, feat_dim: int, hidden: int = 32) -> Mlp:
    """Seeded random feature map, flagged immutable."""
    if obs_dim < 1 or feat_dim < 1:
        raise ValueError("dimensions must be positive")
    rng = np.random.default_rng(seed)
    return Mlp.create([obs_dim, hidden, feat_dim], ["relu", "linear"], rng, frozen=True)


class RunningStd:
    """Running variance of a scalar stream (parallel Welford merge)."""

    def __init__(self, eps: float = 1e-8):
        self.mean, self.var, self.count, self.eps = 0.0, 1.0, 0.0, eps

    def update(self, x) -> None:
        x = np.asarray(x, dtype=np.float64).ravel()
        if x.size == 0:
            return
        bm, bv, bn = float(x.mean()), float(x.var()), x.size
        if self.count == 0:
            self.mean, self.var, self.count = bm, bv, bn
            return
        tot = self.count + bn
        delta = bm - self.mean
        m2 = self.var * self.count + bv * bn + delta * delta * self.count * bn / tot
        self.mean, self.var, self.count = self.mean + delta * bn / tot, m2 / tot, tot

    @property
    def std(self) -> float:
        return math.sqrt(self.var + self.eps)


class IntrinsicMethod:
    """One intrinsic-reward generator plus whatever networks it trains.

    Parameters mirror the harness config: ``kind`` and ``feature_mode`` pick the
    structure; ``k`` is the prediction-improvement lag in model updates.
    """

    def __init__(
        self,
        kind: str,
        obs_dim: int,
        action_dim: int,
        discrete: bool = False,
        feature_mode: str = "raw",
        rng: np.random.Generator | None = None,
        hidden: int = 32,
        bottleneck: int | None = None,
        feat_dim: int = 16,
        learning_rate: float = 1e-3,
        minibatches: int = 4,
        epochs: int = 1,
        k: int = 1,
        bin_width: float = 0.05,
        normalize: bool = False,
        feature_seed: int | None = None,
    ):
        if kind not in KINDS:
            raise ValueError(f"unknown intrinsic kind {kind!r}")
        if feature_mode not in FEATURE_MODES:
            raise ValueError(f"unknown feature mode {feature_mode!r}")
        rng = rng if rng is not None else np.random.default_rng()
        self.kind = kind
        self.feature_mode = feature_mode
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.discrete = discrete
        self.minibatches = minibatches
        self.epochs = epochs
        self.k = k
        self.rng = rng
        self.counter = VisitCounter(bin_width) if kind == "count" else None
        self.normalizer = RunningStd() if normalize else None
        self.world_model: Mlp | None = None
        self.target_net: Mlp | None = None
        self.optimizer: Adam | None = None
        self._history: deque | None = None
        self.updates = 0
        if kind not in MODEL_KINDS:
            return

        if kind == "rnd" or feature_mode != "raw":
            seed = feature_seed if feature_seed is not None else int(rng.integers(2**31))
            self.target_net = make_frozen_features(seed, obs_dim, feat_dim, hidden)
        target_dim = self.target_net.out_dim if self.target_net is not None else obs_dim
        state_dim = feat_dim if feature_mode == "frozen-features" else obs_dim
        act_in = action_dim if kind != "rnd" else 0
        in_dim = state_dim + act_in

        if kind == "rnd":
            sizes, acts = [obs_dim, hidden, target_dim], ["relu", "linear"]
        elif kind == "mime":
            width = bottleneck if bottleneck is not None else max(1, min(target_dim, in_dim) // 2)
            if width > math.ceil(in_dim / 2):
                raise ValueError(f"MIME bottleneck {width} is not narrower than half the input ({in_dim})")
            sizes, acts = [in_dim, hidden, width, target_dim], ["relu", "linear", "linear"]
        else:
            sizes, acts = [in_dim, hidden, target_dim], ["relu", "linear"]
        self.world_model = Mlp.create(sizes, acts, rng)
        self.optimizer = Adam(learning_rate)
        if kind == "pred-improve":
            self._history = deque([self.world_model.copy(frozen=True)], maxlen=k + 1)

    # -- inputs and targets -------------------------------------------------

    def encode_action(self, a) -> np.ndarray:
        if self.discrete:
            a = np.asarray(a).reshape(-1).astype(np.int64)
            out = np.zeros((a.size, self.action_dim))
            out[np.arange(a.size), a] = 1.0
            return out
        return np.atleast_2d(as_tensor(a, self.action_dim))

    def _state(self, s) -> np.ndarray:
        s = np.atleast_2d(as_tensor(s, self.obs_dim))
        if self.feature_mode == "frozen-features":
            return mlp_forward(self.target_net, s)
        return s

    def _target(self, s) -> np.ndarray:
        s = np.atleast_2d(as_tensor(s, self.obs_dim))
        if self.target_net is not None:
            return mlp_forward(self.target_net, s)
        return s

    def model_input(self, s, a=None) -> np.ndarray:
        if self.kind == "rnd":
            return np.atleast_2d(as_tensor(s, self.obs_dim))
        x = self._state(s)
        act = self.encode_action(a)
        if act.shape[0] != x.shape[0]:
            raise ShapeError(f"{act.shape[0]} actions for {x.shape[0]} states")
        return np.concatenate([x, act], axis=1)

    def training_pair(self, s, a, s_next) -> tuple[np.ndarray, np.ndarray]:
        """(model input, regression target) for the method's own objective."""
        if self.kind == "rnd":
            return self.model_input(s_next), self._target(s_next)
        if self.kind == "mime":
            return self.model_input(s, a), self._target(s)
        return self.model_input(s, a), self._target(s_next)

    @staticmethod
    def _sq_error(net: Mlp, x: np.ndarray, t: np.ndarray) -> np.ndarray:
        d = mlp_forward(net, x) - t
        return np.sum(d * d, axis=1)

    # -- rewards --------------------------------------------------------------

    def reward(self, s, a, s_next) -> np.ndarray:
        """Batched intrinsic reward (unnormalized)."""
        if self.kind == "none":
            return np.zeros(len(np.atleast_2d(s)))
        if self.kind == "count":
            return np.array([count_reward(self.counter, x) for x in np.atleast_2d(s_next)])
        if self.kind == "pred-improve":
            snap = self.snapshot
            x, t = self.training_pair(s, a, s_next)
            if snap is None:
                return np.zeros(len(x))
            return 0.5 * (self._sq_error(snap, x, t) - self._sq_error(self.world_model, x, t))
        x, t = self.training_pair(s, a, s_next)
        return self._sq_error(self.world_model, x, t)

    def normalize(self, r: np.ndarray, update: bool = True) -> np.ndarray:
        if self.normalizer is None:
            return r
        if update:
            self.normalizer.update(r)
        return r / self.normalizer.std

    @property
    def snapshot(self) -> Mlp | None:
        if self._history is None or len(self._history) <= self.k:
            return None
        return self._history[0]

    # -- training -------------------------------------------------------------

    def update(self, s, a, s_next) -> float:
        """Minimize the method's squared error over one or more passes; return the pre-update mean."""
        if self.world_model is None:
            raise ValueError(f"intrinsic kind {self.kind!r} has no trainable model")
        x, t = self.training_pair(s, a, s_next)
        n = len(x)
        if n == 0:
            raise ValueError("cannot update on an empty batch")
        pre = float(np.mean(self._sq_error(self.world_model, x, t)))
        for _ in range(self.epochs):
            order = self.rng.permutation(n)
            for idx in np.array_split(order, min(self.minibatches, n)):
                self.fit_step(x[idx], t[idx])
        self.updates += 1
        if self._history is not None:
            self._history.append(self.world_model.copy(frozen=True))
        return pre

    def fit_step(self, x: np.ndarray, t: np.ndarray) -> None:
        out = mlp_forward(self.world_model, x)
        grads, _ = mlp_backward(self.world_model, x, 2.0 * (out - t) / len(x))
        self.optimizer.step(self.world_model.params(), grads)


def _require(method: IntrinsicMethod, kind: str) -> None:
    if method.kind != kind:
        raise ValueError(f"expected a {kind} method, got {method.kind}")


def _scalar_or_batch(values: np.ndarray, s) -> float | np.ndarray:
    return float(values[0]) if np.ndim(s) == 1 else values


def surprisal_reward(method: IntrinsicMethod, s, a, s_next):
    """``|M(s, a) - target(s_next)|^2``."""
    _require(method, "surprisal")
    return _scalar_or_batch(method.reward(s, a, s_next), s)


def mime_reward(method: IntrinsicMethod, s, a):
    """``|M(s, a) - target(s)|^2``; no next state involved."""
    _require(method, "mime")
    return _scalar_or_batch(method.reward(s, a, None), s)


def pred_improve_reward(method: IntrinsicMethod, s, a, s_next):
    """Half the drop in squared prediction error between the lagged snapshot and now."""
    _require(method, "pred-improve")
    return _scalar_or_batch(method.reward(s, a, s_next), s)


def rnd_reward(method: IntrinsicMethod, s_next):
    """``|predictor(s_next) - frozen(s_next)|^2``; actions are ignored."""
    _require(method, "rnd")
    return _scalar_or_batch(method.reward(None, None, s_next), s_next)


def update_world_model(method: IntrinsicMethod, s, a, s_next) -> float:
    return method.update(s, a, s_next)
