"""Stochastic policies, GAE, PPO and rollout collection."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .envs import EnvSpec, VectorEnv, clamp_action
from .intrinsic import IntrinsicMethod
from .ndmath import Adam, Mlp, NumericError, as_tensor, check_finite, gaussian_log_prob, mlp_backward, mlp_forward

LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0


class GaussianPolicy:
    """Diagonal Gaussian over actions measured in units of the action bound.

    A sample ``u`` becomes the environment action ``clamp(bound * u)``; log
    probabilities always refer to ``u`` before clamping.
    """

    def __init__(self, spec: EnvSpec, rng: np.random.Generator, hidden: int = 32, init_log_std: float = 0.0):
        self.spec = spec
        self.mean_net = Mlp.create([spec.observation_dim, hidden, spec.action_dim], ["tanh", "linear"], rng)
        # small last layer so the initial mean is near zero
        self.mean_net.layers[-1].weight *= 0.01
        self.log_std = np.full(spec.action_dim, float(np.clip(init_log_std, LOG_STD_MIN, LOG_STD_MAX)))
        self.scale = spec.action_bound if spec.action_bound > 0 else 1.0

    def params(self) -> list[np.ndarray]:
        return self.mean_net.params() + [self.log_std]

    def distribution(self, s) -> tuple[np.ndarray, np.ndarray]:
        mean = mlp_forward(self.mean_net, s)
        return mean, np.broadcast_to(self.log_std, mean.shape)

    def sample(self, s, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Returns ``(raw_sample, admissible_action, log_prob)`` for a batch of states."""
        mean, log_std = self.distribution(s)
        u = mean + np.exp(log_std) * rng.standard_normal(mean.shape)
        return u, self.to_env(u), gaussian_log_prob(mean, log_std, u)

    def to_env(self, u) -> np.ndarray:
        return clamp_action(self.spec, self.scale * np.asarray(u))

    def log_prob(self, s, u) -> np.ndarray:
        mean, log_std = self.distribution(s)
        return gaussian_log_prob(mean, log_std, u)

    def entropy(self, s) -> np.ndarray:
        n = len(np.atleast_2d(s))
        return np.full(n, float(np.sum(self.log_std + 0.5 * np.log(2 * np.pi * np.e))))

    def surrogate_grads(self, s, u, dlogp: np.ndarray, entropy_coef: float) -> list[np.ndarray]:
        """Parameter gradients of ``sum(dlogp * logp) - entropy_coef * mean(entropy)``."""
        mean = mlp_forward(self.mean_net, s)
        inv_var = np.exp(-2.0 * self.log_std)
        diff = u - mean
        g_mean = dlogp[:, None] * diff * inv_var
        grads, _ = mlp_backward(self.mean_net, s, g_mean)
        g_log_std = np.sum(dlogp[:, None] * (diff * diff * inv_var - 1.0), axis=0) - entropy_coef
        return grads + [g_log_std]

    def after_step(self) -> None:
        np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX, out=self.log_std)

    def networks(self) -> tuple[dict[str, Mlp], dict[str, np.ndarray]]:
        return {"mean_net": self.mean_net}, {"log_std": self.log_std}


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))


class CategoricalPolicy:
    def __init__(self, spec: EnvSpec, rng: np.random.Generator, hidden: int = 32):
        self.spec = spec
        self.logit_net = Mlp.create([spec.observation_dim, hidden, spec.action_dim], ["tanh", "linear"], rng)
        self.logit_net.layers[-1].weight *= 0.01

    def params(self) -> list[np.ndarray]:
        return self.logit_net.params()

    def probs(self, s) -> np.ndarray:
        return np.exp(_log_softmax(mlp_forward(self.logit_net, s)))

    def sample(self, s, rng: np.random.Generator):
        logp_all = _log_softmax(mlp_forward(self.logit_net, np.atleast_2d(s)))
        p = np.exp(logp_all)
        cdf = np.cumsum(p, axis=1)
        draws = rng.random((len(p), 1)) * cdf[:, -1:]
        a = np.minimum(np.sum(cdf < draws, axis=1), p.shape[1] - 1)
        logp = logp_all[np.arange(len(a)), a]
        return a.astype(np.float64)[:, None], a, logp

    def to_env(self, u) -> np.ndarray:
        return np.asarray(u).reshape(-1).astype(np.int64)

    def log_prob(self, s, a) -> np.ndarray:
        a = np.asarray(a).reshape(-1).astype(np.int64)
        return _log_softmax(mlp_forward(self.logit_net, s))[np.arange(len(a)), a]

    def entropy(self, s) -> np.ndarray:
        lp = _log_softmax(mlp_forward(self.logit_net, s))
        return -np.sum(np.exp(lp) * lp, axis=1)

    def surrogate_grads(self, s, a, dlogp: np.ndarray, entropy_coef: float) -> list[np.ndarray]:
        a = np.asarray(a).reshape(-1).astype(np.int64)
        lp = _log_softmax(mlp_forward(self.logit_net, s))
        p = np.exp(lp)
        onehot = np.zeros_like(p)
        onehot[np.arange(len(a)), a] = 1.0
        g = dlogp[:, None] * (onehot - p)
        if entropy_coef:
            h = -np.sum(p * lp, axis=1, keepdims=True)
            g += entropy_coef * p * (lp + h) / len(a)
        grads, _ = mlp_backward(self.logit_net, s, g)
        return grads

    def after_step(self) -> None:
        pass

    def networks(self) -> tuple[dict[str, Mlp], dict[str, np.ndarray]]:
        return {"logit_net": self.logit_net}, {}


def make_policy(spec: EnvSpec, rng: np.random.Generator, hidden: int = 32, init_log_std: float = 0.0):
    if spec.discrete:
        return CategoricalPolicy(spec, rng, hidden)
    return GaussianPolicy(spec, rng, hidden, init_log_std)


def sample_action(policy, s, rng: np.random.Generator):
    """Single-state convenience: ``(admissible_action, log_prob_of_raw_sample)``."""
    u, a, logp = policy.sample(np.atleast_2d(s), rng)
    check_finite(logp, "log-probability")
    return a[0], float(logp[0])


def make_value_net(obs_dim: int, rng: np.random.Generator, hidden: int = 32, heads: int = 1) -> Mlp:
    """Value function mirroring the policy; ``heads=2`` gives (extrinsic, intrinsic) outputs."""
    return Mlp.create([obs_dim, hidden, heads], ["tanh", "linear"], rng)


def combine_rewards(r_ext, r_int, eta: float):
    if eta < 0:
        raise ValueError("eta must be non-negative")
    return r_ext + eta * r_int


@dataclass
class Transition:
    s: np.ndarray
    a: np.ndarray
    r_ext: float
    r_int: float
    s_next: np.ndarray
    done: bool


@dataclass
class RolloutBatch:
    """Flat arrays in env-major order: all of env 0's steps, then env 1's, ..."""

    num_envs: int
    horizon: int
    obs: np.ndarray
    raw_actions: np.ndarray
    actions: np.ndarray
    r_ext: np.ndarray
    r_int: np.ndarray
    r_int_scaled: np.ndarray
    next_obs: np.ndarray
    dones: np.ndarray
    old_log_probs: np.ndarray
    info: dict = field(default_factory=dict)
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.obs)

    def transitions(self) -> Iterator[Transition]:
        for i in range(len(self)):
            yield Transition(
                self.obs[i], self.actions[i], float(self.r_ext[i]), float(self.r_int[i]),
                self.next_obs[i], bool(self.dones[i]),
            )

    def digest(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for arr in (self.obs, self.raw_actions, self.r_ext, self.r_int, self.next_obs, self.dones):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


def gae(rewards, values, next_values, dones, gamma: float, lam: float) -> np.ndarray:
    """Generalized advantage estimates along the last axis (time).

    ``next_values`` are V(s_{t+1}) for each step; they are ignored where ``done``.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.shape[-1] == 0:
        raise ValueError("empty batch")
    notdone = 1.0 - np.asarray(dones, dtype=np.float64)
    delta = rewards + gamma * np.asarray(next_values) * notdone - np.asarray(values)
    adv = np.zeros_like(delta)
    last = np.zeros(delta.shape[:-1])
    for t in range(delta.shape[-1] - 1, -1, -1):
        last = delta[..., t] + gamma * lam * notdone[..., t] * last
        adv[..., t] = last
    return adv


def compute_advantages(
    batch: RolloutBatch,
    gamma: float,
    lam: float,
    value_net: Mlp,
    eta: float = 0.5,
    gamma_int: float | None = None,
    normalize: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Fill ``batch.advantages`` and ``batch.returns``.

    With a one-headed value net the rewards are combined before discounting.
    With two heads (extrinsic, intrinsic) each stream gets its own discount and
    the two advantages are summed; ``returns`` then has two columns.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    shape = (batch.num_envs, batch.horizon)
    v = mlp_forward(value_net, batch.obs)
    v_next = mlp_forward(value_net, batch.next_obs)
    dones = batch.dones.reshape(shape)
    if value_net.out_dim == 1:
        r = combine_rewards(batch.r_ext, batch.r_int_scaled, eta).reshape(shape)
        adv = gae(r, v[:, 0].reshape(shape), v_next[:, 0].reshape(shape), dones, gamma, lam).ravel()
        returns = adv + v[:, 0]
    else:
        g_int = gamma if gamma_int is None else gamma_int
        a_ext = gae(batch.r_ext.reshape(shape), v[:, 0].reshape(shape), v_next[:, 0].reshape(shape),
                    dones, gamma, lam).ravel()
        a_int = gae((eta * batch.r_int_scaled).reshape(shape), v[:, 1].reshape(shape),
                    v_next[:, 1].reshape(shape), dones, g_int, lam).ravel()
        adv = a_ext + a_int
        returns = np.column_stack([a_ext + v[:, 0], a_int + v[:, 1]])
    if normalize and len(adv) > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-12)
    batch.advantages, batch.returns = adv, returns
    return adv, returns


@dataclass
class PPOStats:
    policy_loss: float
    value_loss: float
    entropy: float
    approx_kl: float
    clip_fraction: float
    first_ratio_max_dev: float
    # KL(old || new) over the whole batch after the last epoch, estimated as mean((r - 1) - log r)
    final_kl: float = 0.0


def ppo_update(
    policy,
    value_net: Mlp,
    batch: RolloutBatch,
    clip_eps: float = 0.2,
    epochs: int = 4,
    minibatches: int = 4,
    policy_opt: Adam | None = None,
    value_opt: Adam | None = None,
    entropy_coef: float = 0.0,
    rng: np.random.Generator | None = None,
) -> PPOStats:
    """Clipped-surrogate policy update plus value regression."""
    if batch.advantages is None or batch.returns is None:
        raise ValueError("batch has no advantages; call compute_advantages first")
    rng = rng if rng is not None else np.random.default_rng(0)
    policy_opt = policy_opt if policy_opt is not None else Adam(3e-4)
    value_opt = value_opt if value_opt is not None else Adam(3e-4)
    n = len(batch)
    returns = batch.returns.reshape(n, -1)
    pl, vl, ent, kl, cf = [], [], [], [], []
    first_dev = float("nan")
    for epoch in range(epochs):
        order = rng.permutation(n)
        for mb, idx in enumerate(np.array_split(order, min(minibatches, n))):
            s, u, adv = batch.obs[idx], batch.raw_actions[idx], batch.advantages[idx]
            logp = policy.log_prob(s, u)
            ratio = np.exp(logp - batch.old_log_probs[idx])
            if epoch == 0 and mb == 0:
                first_dev = float(np.max(np.abs(ratio - 1.0)))
            clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
            surr = np.minimum(ratio * adv, clipped * adv)
            h = policy.entropy(s)
            loss = -surr.mean() - entropy_coef * h.mean()
            v = mlp_forward(value_net, s)
            v_err = v - returns[idx]
            v_loss = 0.5 * float(np.mean(np.sum(v_err * v_err, axis=1)))
            if not (np.isfinite(loss) and np.isfinite(v_loss)):
                raise NumericError("non-finite PPO loss")
            # min() picks the unclipped term exactly when it is the smaller one
            active = (ratio * adv) <= (clipped * adv)
            dlogp = -(adv * ratio * active) / len(idx)
            if np.any(dlogp) or entropy_coef:
                policy_opt.step(policy.params(), policy.surrogate_grads(s, u, dlogp, entropy_coef))
                policy.after_step()
            v_grads, _ = mlp_backward(value_net, s, v_err / len(idx))
            value_opt.step(value_net.params(), v_grads)
            pl.append(-surr.mean())
            vl.append(v_loss)
            ent.append(h.mean())
            kl.append(float(np.mean(batch.old_log_probs[idx] - logp)))
            cf.append(float(np.mean(np.abs(ratio - 1.0) > clip_eps)))
    log_ratio = policy.log_prob(batch.obs, batch.raw_actions) - batch.old_log_probs
    final_kl = float(np.mean(np.expm1(log_ratio) - log_ratio))
    return PPOStats(float(np.mean(pl)), float(np.mean(vl)), float(np.mean(ent)), float(np.mean(kl)),
                    float(np.mean(cf)), first_dev, final_kl)


def adapt_learning_rate(opt: Adam, kl: float, target: float, factor: float = 1.5,
                        bounds: tuple[float, float] = (1e-5, 1e-1)) -> float:
    """Scale the step size so the per-update policy shift tracks a KL target.

    Grows by ``factor`` when the update moved less than half the target, shrinks
    when it moved more than twice the target; otherwise unchanged.
    """
    if kl < 0.5 * target:
        opt.learning_rate = min(opt.learning_rate * factor, bounds[1])
    elif kl > 2.0 * target:
        opt.learning_rate = max(opt.learning_rate / factor, bounds[0])
    return opt.learning_rate


def collect_rollouts(
    env: VectorEnv,
    policy,
    method: IntrinsicMethod,
    horizon: int,
    rng: np.random.Generator,
) -> RolloutBatch:
    """Run ``horizon`` steps in every copy of ``env`` from its current state.

    MIME rewards are computed from (s_t, a_t) before the environment moves;
    every other method sees s_{t+1}. The world model is not updated here.
    """
    n = env.num_envs
    if horizon < 1:
        raise ValueError("horizon must be positive")
    obs = env.observe()
    obs_dim = obs.shape[1]
    O = np.zeros((horizon, n, obs_dim))
    NO = np.zeros_like(O)
    raw_list, act_list = [], []
    logp = np.zeros((horizon, n))
    r_ext = np.zeros((horizon, n))
    r_int = np.zeros((horizon, n))
    dones = np.zeros((horizon, n), dtype=bool)
    infos: dict[str, list] = {}
    for t in range(horizon):
        u, a, lp = policy.sample(obs, rng)
        check_finite(lp, "log-probability")
        if method.kind == "mime":
            r_int[t] = method.reward(obs, a, None)
        try:
            next_obs, rew, done = env.step(a)
        except Exception as exc:
            raise RuntimeError(f"environment fault at rollout step {t}: {exc}") from exc
        if method.kind != "mime":
            r_int[t] = method.reward(obs, a, next_obs)
        O[t], NO[t] = obs, next_obs
        raw_list.append(u)
        act_list.append(np.asarray(a, dtype=np.float64).reshape(n, -1))
        logp[t], r_ext[t], dones[t] = lp, rew, done
        for key, val in env.last_info.items():
            infos.setdefault(key, []).append(val)
        obs = env.observe()

    def flat(x):
        x = np.asarray(x)
        return np.swapaxes(x, 0, 1).reshape((n * horizon,) + x.shape[2:])

    r_int_flat = flat(r_int)
    return RolloutBatch(
        num_envs=n,
        horizon=horizon,
        obs=flat(O),
        raw_actions=flat(np.stack(raw_list)),
        actions=flat(np.stack(act_list)),
        r_ext=flat(r_ext),
        r_int=r_int_flat,
        r_int_scaled=method.normalize(r_int_flat),
        next_obs=flat(NO),
        dones=flat(dones),
        old_log_probs=flat(logp),
        info={k: flat(np.stack(v)) for k, v in infos.items()},
    )
