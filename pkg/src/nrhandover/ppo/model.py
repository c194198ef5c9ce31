"""Actor/critic pair, action selection, and the checkpoint container."""
from __future__ import annotations

import base64
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .adam import Adam
from .losses import log_softmax
from .network import HIDDEN, Mlp

CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class PpoConfig:
    lr: float = 5e-5
    clip_eps: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    ent_coef: float = 0.1
    vf_coef: float = 0.5
    rollout_len: int = 2048
    n_envs: int = 1
    minibatch_size: int = 64
    epochs_per_update: int = 10
    max_grad_norm: float = 0.5
    normalize_advantage: bool = True
    total_timesteps: int = 2_000_000
    phase1_fraction: float = 0.5
    hidden: tuple = HIDDEN
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.clip_eps < 1:
            raise ValueError("clip_eps must lie in (0, 1)")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0 <= self.gae_lambda <= 1:
            raise ValueError("gae_lambda must lie in [0, 1]")
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if not 0 <= self.phase1_fraction <= 1:
            raise ValueError("phase1_fraction must lie in [0, 1]")
        if min(self.rollout_len, self.n_envs, self.minibatch_size, self.epochs_per_update) < 1:
            raise ValueError("rollout/minibatch/epoch sizes must be >= 1")
        object.__setattr__(self, "hidden", tuple(self.hidden))

    @classmethod
    def from_dict(cls, d: dict) -> PpoConfig:
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


class PpoModel:
    def __init__(self, n_bs: int, cfg: PpoConfig, actor: Mlp | None = None, critic: Mlp | None = None):
        self.n_bs = n_bs
        self.cfg = cfg
        if actor is None or critic is None:
            rng = np.random.default_rng(cfg.seed)
            actor = Mlp.init(self.obs_size, n_bs, rng, hidden=cfg.hidden, head_gain=0.01)
            critic = Mlp.init(self.obs_size, 1, rng, hidden=cfg.hidden, head_gain=1.0)
        self.actor = actor
        self.critic = critic
        self.adam = Adam(cfg.lr)

    @property
    def obs_size(self) -> int:
        return 2 * self.n_bs + 1

    def flat_params(self) -> dict[str, np.ndarray]:
        """Shared views of every parameter keyed by ``actor.W0`` style paths."""
        out = {f"actor.{k}": v for k, v in self.actor.params.items()}
        out.update({f"critic.{k}": v for k, v in self.critic.params.items()})
        return out

    def action_probs(self, obs: np.ndarray) -> np.ndarray:
        return np.exp(log_softmax(self.actor.forward(np.atleast_2d(obs))))

    def value(self, obs: np.ndarray) -> np.ndarray:
        return self.critic.forward(np.atleast_2d(obs))[:, 0]

    def greedy(self, obs: np.ndarray) -> np.ndarray:
        return np.argmax(self.actor.forward(np.atleast_2d(obs)), axis=-1)

    def sample(self, obs: np.ndarray, rng: np.random.Generator):
        """Sampled actions, their log-probabilities, and state values for a batch."""
        obs = np.atleast_2d(obs)
        logp_all = log_softmax(self.actor.forward(obs))
        cdf = np.cumsum(np.exp(logp_all), axis=-1)
        u = rng.random(len(obs))[:, None] * cdf[:, -1:]
        actions = np.minimum((cdf <= u).sum(axis=-1), self.n_bs - 1)
        logp = logp_all[np.arange(len(obs)), actions]
        return actions, logp, self.value(obs)


def _encode(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode(d: dict) -> np.ndarray:
    return np.frombuffer(base64.b64decode(d["data"]), dtype="<f8").reshape(d["shape"]).copy()


def save_checkpoint(path, model: PpoModel, *, timesteps: int = 0, updates: int = 0,
                    rng_state: dict | None = None, extra: dict | None = None) -> None:
    """Write a self-describing JSON checkpoint; byte-identical for identical inputs."""
    adam = model.adam
    doc = {
        "format": "nrhandover-ppo",
        "version": CHECKPOINT_VERSION,
        "n_bs": model.n_bs,
        "actor_sizes": model.actor.sizes,
        "critic_sizes": model.critic.sizes,
        "actor": {k: _encode(v) for k, v in model.actor.params.items()},
        "critic": {k: _encode(v) for k, v in model.critic.params.items()},
        "adam": {"t": adam.t, "m": {k: _encode(v) for k, v in adam.m.items()},
                 "v": {k: _encode(v) for k, v in adam.v.items()}},
        "ppo_config": asdict(model.cfg),
        "timesteps": timesteps,
        "updates": updates,
        "rng_state": rng_state,
        "extra": extra or {},
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def load_checkpoint(path, *, expect_n_bs: int | None = None):
    """Return ``(model, doc)``; raises CheckpointError on version or shape problems."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: not a checkpoint ({exc})") from exc
    if doc.get("format") != "nrhandover-ppo":
        raise CheckpointError(f"{path}: not a checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    n_bs = int(doc["n_bs"])
    if expect_n_bs is not None and n_bs != expect_n_bs:
        raise CheckpointError(
            f"checkpoint expects N={n_bs} base stations (state size {2 * n_bs + 1}), "
            f"traces have N={expect_n_bs} (state size {2 * expect_n_bs + 1})")
    cfg = PpoConfig.from_dict(doc["ppo_config"])
    try:
        actor = Mlp(doc["actor_sizes"], {k: _decode(v) for k, v in doc["actor"].items()})
        critic = Mlp(doc["critic_sizes"], {k: _decode(v) for k, v in doc["critic"].items()})
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: inconsistent layer shapes ({exc})") from exc
    if actor.sizes[0] != 2 * n_bs + 1 or actor.sizes[-1] != n_bs or critic.sizes[0] != 2 * n_bs + 1:
        raise CheckpointError(f"{path}: layer shapes do not match N={n_bs}")
    model = PpoModel(n_bs, cfg, actor, critic)
    adam = doc["adam"]
    model.adam.load_state_dict({"t": adam["t"],
                                "m": {k: _decode(v) for k, v in adam["m"].items()},
                                "v": {k: _decode(v) for k, v in adam["v"].items()}})
    return model, doc
