"""Soft actor-critic with twin critics, target networks, and replay.

The actor is a squashed diagonal Gaussian over [-1, 1]^n; critics are a
stacked pair evaluated in one pass. All gradients are assembled by hand
on top of the :mod:`phevmerge.nets` backward passes:

* critic loss: mean squared Bellman residual against
  r + gamma * (min_k Q'_k(s', a') - alpha * log pi(a'|s')) with the
  bootstrap dropped on terminal transitions,
* actor loss: mean(alpha * log pi - min_k Q_k(s, a)) with reparameterized
  samples, so the Q gradient flows back through the action,
* entropy weight: log alpha descends -mean(log pi + target_entropy).

Observation normalization uses running statistics (a stand-in for batch
normalization layers) and is stored in policy checkpoints together with
the action bounds, so evaluation reproduces training behavior bitwise.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from phevmerge.nets import Adam, Mlp, polyak_update

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
SQUASH_EPS = 1e-6
LOG_2PI = math.log(2.0 * math.pi)

CHECKPOINT_MAGIC = b"PMC1"


class CheckpointError(ValueError):
    """A policy file is corrupted or does not match the requested setup."""


@dataclass
class SacConfig:
    gamma: float = 0.99
    tau: float = 0.005
    lr_actor: float = 3e-4
    lr_critic: float = 3e-4
    lr_alpha: float = 3e-4
    batch_size: int = 256
    buffer_capacity: int = 1_000_000
    alpha: float = 0.2                      # initial entropy weight
    auto_alpha: bool = True
    target_entropy: Optional[float] = None  # default: -action_dim
    warmup_steps: int = 10_000
    updates_per_env_step: int = 1
    hidden: tuple = (64, 64)
    actor_final_scale: float = 0.01         # small initial actions

    def validate(self):
        # gamma = 0 is allowed as the degenerate myopic case
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must be in (0, 1]")
        if self.batch_size <= 0 or self.buffer_capacity < self.batch_size:
            raise ValueError("need buffer_capacity >= batch_size > 0")
        return self


class ReplayBuffer:
    """Uniform-sampling ring buffer over preallocated arrays."""

    def __init__(self, capacity: int, obs_dim: int, act_dim: int):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.act = np.zeros((capacity, act_dim))
        self.rew = np.zeros(capacity)
        self.obs2 = np.zeros((capacity, obs_dim))
        self.done = np.zeros(capacity)
        self.size = 0
        self._head = 0

    def __len__(self):
        return self.size

    def add(self, s, a, r, s2, done: bool):
        i = self._head
        self.obs[i] = s
        self.act[i] = a
        self.rew[i] = r
        self.obs2[i] = s2
        self.done[i] = float(done)
        self._head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, rng: np.random.Generator, batch: int):
        idx = rng.integers(0, self.size, size=batch)
        return (self.obs[idx], self.act[idx], self.rew[idx],
                self.obs2[idx], self.done[idx])


class RunningNorm:
    """Welford running mean/variance used as the observation normalizer."""

    def __init__(self, dim: int):
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)
        self.count = 0

    def update(self, x):
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)

    @property
    def std(self) -> np.ndarray:
        if self.count < 2:
            return np.ones_like(self.mean)
        return np.sqrt(self.m2 / self.count + 1e-8)

    def normalize(self, x):
        return np.clip((x - self.mean) / self.std, -10.0, 10.0)

    def state(self):
        return {"mean": self.mean.tolist(), "m2": self.m2.tolist(),
                "count": self.count}

    @classmethod
    def from_state(cls, st):
        norm = cls(len(st["mean"]))
        norm.mean = np.asarray(st["mean"], dtype=float)
        norm.m2 = np.asarray(st["m2"], dtype=float)
        norm.count = int(st["count"])
        return norm


def squashed_gaussian_logp(eps, log_std, squashed):
    """log pi of a = tanh(mu + std*eps), summed over action dimensions."""
    gauss = -0.5 * eps * eps - log_std - 0.5 * LOG_2PI
    corr = np.log(1.0 - squashed * squashed + SQUASH_EPS)
    return gauss.sum(axis=-1) - corr.sum(axis=-1)


class SacAgent:
    def __init__(self, obs_dim: int, act_dim: int, cfg: SacConfig,
                 rng: Optional[np.random.Generator] = None):
        cfg.validate()
        self.cfg = cfg
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        rng = rng or np.random.default_rng(0)

        sizes = (obs_dim, *cfg.hidden, 2 * act_dim)
        self.actor = Mlp(sizes, stack=1, rng=rng,
                         final_scale=cfg.actor_final_scale)
        q_sizes = (obs_dim + act_dim, *cfg.hidden, 1)
        self.critics = Mlp(q_sizes, stack=2, rng=rng)
        self.target_critics = self.critics.copy()

        self.opt_actor = Adam(self.actor.params, lr=cfg.lr_actor)
        self.opt_critic = Adam(self.critics.params, lr=cfg.lr_critic)
        self.log_alpha = np.array(math.log(max(cfg.alpha, 1e-10)))
        self.opt_alpha = Adam([self.log_alpha], lr=cfg.lr_alpha)
        self.target_entropy = (cfg.target_entropy
                               if cfg.target_entropy is not None
                               else -float(act_dim))
        self.obs_norm = RunningNorm(obs_dim)

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha))

    # -- policy -------------------------------------------------------------

    def _policy_params(self, s, want_cache=False):
        """Actor forward: returns mu, clipped log_std [, cache, clip mask]."""
        out = self.actor.forward(s, want_cache=want_cache)
        if want_cache:
            out, cache = out
        head = out[0]
        mu = head[:, :self.act_dim]
        log_std_raw = head[:, self.act_dim:]
        log_std = np.clip(log_std_raw, LOG_STD_MIN, LOG_STD_MAX)
        if want_cache:
            gate = (log_std_raw > LOG_STD_MIN) & (log_std_raw < LOG_STD_MAX)
            return mu, log_std, cache, gate
        return mu, log_std

    def sample(self, s, rng: np.random.Generator):
        """Reparameterized action in (-1, 1)^n and its log-probability."""
        s = np.atleast_2d(np.asarray(s, dtype=float))
        mu, log_std = self._policy_params(s)
        eps = rng.standard_normal(mu.shape)
        a = np.tanh(mu + np.exp(log_std) * eps)
        return a, squashed_gaussian_logp(eps, log_std, a)

    def act(self, obs, rng: Optional[np.random.Generator] = None,
            deterministic: bool = False):
        """One action for a single raw (env-normalized) observation."""
        s = self.obs_norm.normalize(np.asarray(obs, dtype=float))[None, :]
        if deterministic:
            mu, _ = self._policy_params(s)
            return np.tanh(mu[0])
        a, _ = self.sample(s, rng)
        return a[0]

    # -- losses and their gradients ------------------------------------------

    def bellman_targets(self, r, s2, done, eps2):
        """Bootstrapped targets with the twin-minimum and entropy term."""
        mu, log_std = self._policy_params(s2)
        a2 = np.tanh(mu + np.exp(log_std) * eps2)
        logp2 = squashed_gaussian_logp(eps2, log_std, a2)
        q12 = self.target_critics.forward(np.concatenate([s2, a2], axis=1))[..., 0]
        soft_v = np.minimum(q12[0], q12[1]) - self.alpha * logp2
        return r + self.cfg.gamma * (1.0 - done) * soft_v

    def critic_losses(self, s, a, r, s2, done, eps2, want_grads=False):
        """Per-critic mean squared Bellman residuals (and their gradients)."""
        y = self.bellman_targets(r, s2, done, eps2)
        x = np.concatenate([s, a], axis=1)
        q, cache = self.critics.forward(x, want_cache=True)
        err = q[..., 0] - y[None, :]
        losses = (err * err).mean(axis=1)
        if not want_grads:
            return losses
        dout = (2.0 / err.shape[1]) * err[..., None]
        grads, _ = self.critics.backward(cache, dout, need_input_grad=False)
        return losses, grads

    def actor_loss(self, s, eps, want_grads=False):
        """mean(alpha * log pi - min Q) over reparameterized fresh samples."""
        n_batch = s.shape[0]
        mu, log_std, cache, gate = self._policy_params(s, want_cache=True)
        std = np.exp(log_std)
        u = mu + std * eps
        t = np.tanh(u)
        logp = squashed_gaussian_logp(eps, log_std, t)

        x = np.concatenate([s, t], axis=1)
        q, qcache = self.critics.forward(x, want_cache=True)
        q = q[..., 0]
        second = q[1] < q[0]
        q_min = np.where(second, q[1], q[0])
        loss = float(np.mean(self.alpha * logp - q_min))
        if not want_grads:
            return loss, logp

        dq = np.zeros((2, n_batch, 1))
        dq[0, ~second, 0] = -1.0 / n_batch
        dq[1, second, 0] = -1.0 / n_batch
        _, dx = self.critics.backward(qcache, dq)
        da = dx.sum(axis=0)[:, self.obs_dim:]

        s2t = 1.0 - t * t
        # d/du of the squash correction -log(1 - tanh(u)^2 + eps)
        corr = 2.0 * t * s2t / (s2t + SQUASH_EPS)
        scale = self.alpha / n_batch
        g_mu = scale * corr + da * s2t
        g_ls = (scale * (corr * std * eps - 1.0)
                + da * s2t * std * eps) * gate
        dout = np.concatenate([g_mu, g_ls], axis=1)[None]
        grads, _ = self.actor.backward(cache, dout, need_input_grad=False)
        return loss, grads, logp

    # -- one training update --------------------------------------------------

    def update(self, batch, rng: np.random.Generator) -> dict:
        s_raw, a, r, s2_raw, done = batch
        s = self.obs_norm.normalize(s_raw)
        s2 = self.obs_norm.normalize(s2_raw)

        eps2 = rng.standard_normal((s2.shape[0], self.act_dim))
        c_losses, c_grads = self.critic_losses(s, a, r, s2, done, eps2,
                                               want_grads=True)
        self.opt_critic.step(self.critics.params, c_grads)

        eps = rng.standard_normal((s.shape[0], self.act_dim))
        a_loss, a_grads, logp = self.actor_loss(s, eps, want_grads=True)
        self.opt_actor.step(self.actor.params, a_grads)

        if self.cfg.auto_alpha:
            g = np.array(-np.mean(logp + self.target_entropy))
            self.opt_alpha.step([self.log_alpha], [g])

        polyak_update(self.target_critics, self.critics, self.cfg.tau)
        entropy = float(-np.mean(logp))
        return {
            "critic_loss": float(c_losses.mean()),
            "actor_loss": a_loss,
            "alpha": self.alpha,
            "entropy": entropy,
            # mean on-policy min-Q, recovered from the actor objective
            "mean_q": self.alpha * -entropy - a_loss,
        }


# -- training loop -------------------------------------------------------------


def train(env_factory: Callable, cfg: SacConfig, seed: int, total_steps: int,
          callbacks=None):
    """Episodic off-policy training loop.

    Random uniform actions fill the buffer during warmup, after which each
    environment step is followed by ``updates_per_env_step`` updates. The
    returned log holds one row per finished episode with the undiscounted
    return and the latest optimization diagnostics.
    """
    rng = np.random.default_rng(seed)
    env = env_factory(seed)
    agent = SacAgent(env.obs_dim, env.action_dim, cfg, rng=rng)
    buffer = ReplayBuffer(cfg.buffer_capacity, env.obs_dim, env.action_dim)

    obs = env.reset()
    ep_return = 0.0
    episode = 0
    diag = {"critic_loss": float("nan"), "actor_loss": float("nan"),
            "alpha": agent.alpha, "entropy": float("nan")}
    log = []
    for step in range(1, total_steps + 1):
        if step <= cfg.warmup_steps:
            action = rng.uniform(-1.0, 1.0, env.action_dim)
        else:
            action = agent.act(obs.normalized, rng)
        obs2, reward, done, info = env.step(action)
        # time caps are truncations: no terminal bootstrap cut
        buffer.add(obs.normalized, action, reward.total, obs2.normalized,
                   done and not info["timeout"])
        agent.obs_norm.update(obs.normalized)
        ep_return += reward.total

        if step > cfg.warmup_steps and len(buffer) >= cfg.batch_size:
            for _ in range(cfg.updates_per_env_step):
                diag = agent.update(buffer.sample(rng, cfg.batch_size), rng)

        if done:
            row = {"env_step": step, "episode": episode,
                   "undiscounted_return": ep_return,
                   "critic_loss": diag["critic_loss"],
                   "actor_loss": diag["actor_loss"],
                   "alpha": diag["alpha"], "entropy": diag["entropy"]}
            log.append(row)
            if callbacks:
                for cb in callbacks:
                    cb(row)
            episode += 1
            ep_return = 0.0
            obs = env.reset()
        else:
            obs = obs2
    return agent, log


# -- policy checkpoints ---------------------------------------------------------


class Policy:
    """A frozen actor: enough to act, nothing more."""

    def __init__(self, approach: str, obs_dim: int, act_dim: int, hidden,
                 actor: Mlp, obs_norm: RunningNorm, action_low, action_high,
                 seed: int, config_hash: str):
        self.approach = approach
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.hidden = tuple(hidden)
        self.actor = actor
        self.obs_norm = obs_norm
        self.action_low = np.asarray(action_low, dtype=float)
        self.action_high = np.asarray(action_high, dtype=float)
        self.seed = seed
        self.config_hash = config_hash

    def act(self, obs, rng: Optional[np.random.Generator] = None,
            deterministic: bool = True):
        s = self.obs_norm.normalize(np.asarray(obs, dtype=float))[None, :]
        out = self.actor.forward(s)[0, 0]
        mu = out[:self.act_dim]
        if deterministic:
            return np.tanh(mu)
        log_std = np.clip(out[self.act_dim:], LOG_STD_MIN, LOG_STD_MAX)
        eps = rng.standard_normal(self.act_dim)
        return np.tanh(mu + np.exp(log_std) * eps)

    @classmethod
    def from_agent(cls, agent: SacAgent, approach: str, action_low,
                   action_high, seed: int, config_hash: str) -> "Policy":
        return cls(approach, agent.obs_dim, agent.act_dim, agent.cfg.hidden,
                   agent.actor.copy(), RunningNorm.from_state(agent.obs_norm.state()),
                   action_low, action_high, seed, config_hash)


def save_policy(path, policy: Policy):
    """Length-prefixed JSON header followed by flat little-endian float64s."""
    header = {
        "schema_version": 1,
        "approach": policy.approach,
        "obs_dim": policy.obs_dim,
        "act_dim": policy.act_dim,
        "hidden": list(policy.hidden),
        "action_low": policy.action_low.tolist(),
        "action_high": policy.action_high.tolist(),
        "obs_norm": policy.obs_norm.state(),
        "seed": policy.seed,
        "config_hash": policy.config_hash,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    params = policy.actor.get_flat().astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(params)


def load_policy(path, expect_approach: Optional[str] = None,
                expect_obs_dim: Optional[int] = None) -> Policy:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a policy checkpoint")
    (hlen,) = struct.unpack("<Q", data[4:12])
    if len(data) < 12 + hlen:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(data[12:12 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupted header ({exc})") from exc
    for key in ("approach", "obs_dim", "act_dim", "hidden", "action_low",
                "action_high", "obs_norm", "seed", "config_hash"):
        if key not in header:
            raise CheckpointError(f"{path}: header missing {key!r}")
    if expect_approach is not None and header["approach"] != expect_approach:
        raise CheckpointError(
            f"{path}: checkpoint is for approach {header['approach']!r}, "
            f"expected {expect_approach!r}")
    if expect_obs_dim is not None and header["obs_dim"] != expect_obs_dim:
        raise CheckpointError(
            f"{path}: observation size {header['obs_dim']} does not match "
            f"expected {expect_obs_dim}")

    sizes = (header["obs_dim"], *header["hidden"], 2 * header["act_dim"])
    actor = Mlp(sizes, stack=1)
    flat = np.frombuffer(data[12 + hlen:], dtype="<f8")
    expected = actor.get_flat().size
    if flat.size != expected:
        raise CheckpointError(
            f"{path}: parameter payload holds {flat.size} values, "
            f"expected {expected}")
    actor.set_flat(flat.astype(float))
    return Policy(header["approach"], header["obs_dim"], header["act_dim"],
                  header["hidden"], actor,
                  RunningNorm.from_state(header["obs_norm"]),
                  header["action_low"], header["action_high"],
                  header["seed"], header["config_hash"])
