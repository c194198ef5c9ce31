"""Rollout collection, PPO updates, and the two-phase training driver."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..env import HandoverEnv
from .gae import compute_gae
from .losses import ppo_loss
from .model import PpoConfig, PpoModel

log = logging.getLogger(__name__)

LOG_COLUMNS = ["update", "timesteps", "phase", "mean_episode_reward", "mean_step_reward",
               "policy_loss", "value_loss", "entropy", "explained_variance"]


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class RolloutBuffer:
    """Steps stored as (rollout_len, n_envs) arrays."""
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    values: np.ndarray
    logprobs: np.ndarray
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    @classmethod
    def empty(cls, length: int, n_envs: int, obs_size: int) -> RolloutBuffer:
        return cls(np.zeros((length, n_envs, obs_size)), np.zeros((length, n_envs), dtype=int),
                   np.zeros((length, n_envs)), np.zeros((length, n_envs)),
                   np.zeros((length, n_envs)), np.zeros((length, n_envs)))

    def finish(self, last_values: np.ndarray, gamma: float, lam: float) -> None:
        adv = np.zeros_like(self.rewards)
        ret = np.zeros_like(self.rewards)
        for e in range(self.rewards.shape[1]):
            adv[:, e], ret[:, e] = compute_gae(self.rewards[:, e], self.values[:, e], self.dones[:, e],
                                               gamma, lam, last_value=last_values[e])
        self.advantages, self.returns = adv, ret

    def flat(self) -> dict[str, np.ndarray]:
        n = self.rewards.size
        return {
            "obs": self.obs.reshape(n, -1),
            "actions": self.actions.reshape(n),
            "logprobs": self.logprobs.reshape(n),
            "advantages": self.advantages.reshape(n),
            "returns": self.returns.reshape(n),
            "values": self.values.reshape(n),
        }


def normalize(x: np.ndarray) -> np.ndarray:
    return (x - x.mean()) / (x.std() + 1e-8)


def explained_variance(pred: np.ndarray, target: np.ndarray) -> float:
    var = target.var()
    return float("nan") if var == 0 else float(1.0 - (target - pred).var() / var)


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
    if total > max_norm:
        scale = max_norm / (total + 1e-6)
        for g in grads.values():
            g *= scale
    return total


def update(model: PpoModel, batch: dict[str, np.ndarray], rng: np.random.Generator) -> dict:
    """``epochs_per_update`` passes of shuffled minibatches over one rollout."""
    cfg = model.cfg
    params = model.flat_params()
    n = len(batch["actions"])
    advantages = batch["advantages"]
    if cfg.normalize_advantage and n > 1:
        advantages = normalize(advantages)
    stats = {"policy": [], "value": [], "entropy": []}
    for _ in range(cfg.epochs_per_update):
        order = rng.permutation(n)
        for start in range(0, n, cfg.minibatch_size):
            idx = order[start:start + cfg.minibatch_size]
            adv = advantages[idx]
            parts, ga, gc = ppo_loss(model.actor, model.critic, batch["obs"][idx], batch["actions"][idx],
                                     batch["logprobs"][idx], adv, batch["returns"][idx],
                                     clip_eps=cfg.clip_eps, ent_coef=cfg.ent_coef, vf_coef=cfg.vf_coef)
            if not np.isfinite(parts["total"]):
                raise TrainingDiverged(f"non-finite loss {parts['total']}")
            grads = {f"actor.{k}": v for k, v in ga.items()}
            grads.update({f"critic.{k}": v for k, v in gc.items()})
            if cfg.max_grad_norm:
                clip_grad_norm(grads, cfg.max_grad_norm)
            model.adam.step(params, grads)
            for k in stats:
                stats[k].append(parts[k])
    return {k: float(np.mean(v)) for k, v in stats.items()}


@dataclass
class TrainLog:
    rows: list[dict] = field(default_factory=list)

    def write(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
            w.writeheader()
            for r in self.rows:
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def train(env_factory: Callable[[int], HandoverEnv], cfg: PpoConfig, *, model: PpoModel | None = None,
          start_timesteps: int = 0, start_update: int = 0, rng_state: dict | None = None,
          on_update: Callable[[PpoModel, dict, np.random.Generator], None] | None = None):
    """Train a policy; returns ``(model, TrainLog)``.

    ``env_factory(i)`` builds the i-th vectorized environment. Phase 1 (terminate on RLF)
    runs for the first ``phase1_fraction`` of ``total_timesteps``, phase 2 (also
    terminate on ping-pong) afterwards. ``on_update`` is called after every update
    with the model, the log row, and the training RNG (for checkpointing).
    """
    envs = [env_factory(i) for i in range(cfg.n_envs)]
    n_bs = envs[0].n_bs
    model = model or PpoModel(n_bs, cfg)
    rng = np.random.default_rng(cfg.seed + 1)
    if rng_state is not None:
        rng.bit_generator.state = rng_state
    obs = np.stack([env.reset().as_array() for env in envs])
    ep_return = np.zeros(cfg.n_envs)
    log_rows = TrainLog()
    timesteps, n_update = start_timesteps, start_update
    phase_split = cfg.phase1_fraction * cfg.total_timesteps

    while timesteps < cfg.total_timesteps:
        phase = 1 if timesteps < phase_split else 2
        for env in envs:
            if env.cfg.phase != phase:
                env.set_phase(phase)
        buf = RolloutBuffer.empty(cfg.rollout_len, cfg.n_envs, model.obs_size)
        finished = []
        for t in range(cfg.rollout_len):
            actions, logp, values = model.sample(obs, rng)
            buf.obs[t], buf.actions[t], buf.logprobs[t], buf.values[t] = obs, actions, logp, values
            for e, env in enumerate(envs):
                res = env.step(int(actions[e]))
                reward = res.reward
                ep_return[e] += reward
                if res.truncated:
                    # horizon cut, not a true terminal: bootstrap from the final observation
                    reward += cfg.gamma * float(model.value(res.next_state.as_array())[0])
                buf.rewards[t, e] = reward
                if res.terminated or res.truncated:
                    buf.dones[t, e] = 1.0
                    finished.append(ep_return[e])
                    ep_return[e] = 0.0
                    obs[e] = env.reset().as_array()
                else:
                    obs[e] = res.next_state.as_array()
        timesteps += cfg.rollout_len * cfg.n_envs
        buf.finish(model.value(obs), cfg.gamma, cfg.gae_lambda)
        batch = buf.flat()
        stats = update(model, batch, rng)
        n_update += 1
        row = {
            "update": n_update,
            "timesteps": timesteps,
            "phase": phase,
            "mean_episode_reward": float(np.mean(finished)) if finished else float("nan"),
            "mean_step_reward": float(buf.rewards.mean()),
            "policy_loss": stats["policy"],
            "value_loss": stats["value"],
            "entropy": stats["entropy"],
            "explained_variance": explained_variance(batch["values"], batch["returns"]),
        }
        log_rows.rows.append(row)
        log.info("update %d ts %d phase %d step-reward %.4f entropy %.3f", n_update, timesteps,
                 phase, row["mean_step_reward"], row["entropy"])
        if on_update is not None:
            on_update(model, row, rng)
    return model, log_rows
