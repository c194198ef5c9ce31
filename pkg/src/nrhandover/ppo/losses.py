"""Categorical policy helpers and the PPO loss terms with their analytic gradients."""
from __future__ import annotations

import numpy as np


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def entropy(probs: np.ndarray) -> np.ndarray:
    """Shannon entropy in nats along the last axis; 0·log 0 counts as 0."""
    p = np.asarray(probs, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return -terms.sum(axis=-1)


def entropy_bonus(probs: np.ndarray) -> float:
    """Mean entropy of a batch of categorical distributions."""
    return float(np.mean(entropy(np.atleast_2d(probs))))


def clipped_policy_loss(logp_new, logp_old, adv, clip_eps: float) -> float:
    """Negated clipped surrogate: -mean(min(ψA, clip(ψ, 1-ε, 1+ε)A))."""
    ratio = np.exp(np.asarray(logp_new) - np.asarray(logp_old))
    adv = np.asarray(adv)
    surr = np.minimum(ratio * adv, np.clip(ratio, 1 - clip_eps, 1 + clip_eps) * adv)
    return float(-surr.mean())


def clipped_policy_grad(logp_new, logp_old, adv, clip_eps: float) -> np.ndarray:
    """d(clipped_policy_loss)/d(logp_new), elementwise."""
    ratio = np.exp(logp_new - logp_old)
    clipped = np.clip(ratio, 1 - clip_eps, 1 + clip_eps)
    # the clipped branch has zero slope outside the band; inside the band both branches agree
    active = ratio * adv <= clipped * adv
    return np.where(active, -adv * ratio, 0.0) / len(adv)


def value_loss(values_pred, targets) -> float:
    d = np.asarray(values_pred, dtype=float) - np.asarray(targets, dtype=float)
    return float(np.mean(d * d))


class LossParts(dict):
    """Named scalar loss components (policy, value, entropy, total, approx_kl, clip_frac)."""


def ppo_loss(actor, critic, obs, actions, logp_old, adv, returns, *, clip_eps: float,
             ent_coef: float, vf_coef: float, need_grads: bool = True):
    """Total loss ``L_clip - ent_coef·H + vf_coef·L_value`` and gradients for both networks."""
    logits, a_acts = actor.forward(obs, keep=True)
    values, c_acts = critic.forward(obs, keep=True)
    values = values[:, 0]
    logp_all = log_softmax(logits)
    probs = np.exp(logp_all)
    idx = np.arange(len(actions))
    logp = logp_all[idx, actions]

    ent = entropy(probs)
    parts = LossParts(
        policy=clipped_policy_loss(logp, logp_old, adv, clip_eps),
        value=value_loss(values, returns),
        entropy=float(ent.mean()),
    )
    parts["total"] = parts["policy"] - ent_coef * parts["entropy"] + vf_coef * parts["value"]
    log_ratio = logp - logp_old
    parts["approx_kl"] = float(np.mean(np.exp(log_ratio) - 1 - log_ratio))
    parts["clip_frac"] = float(np.mean(np.abs(np.exp(log_ratio) - 1) > clip_eps))
    if not need_grads:
        return parts, None, None

    n = len(actions)
    onehot = np.zeros_like(logits)
    onehot[idx, actions] = 1.0
    # d logp / d logits = onehot - p
    g_logits = clipped_policy_grad(logp, logp_old, adv, clip_eps)[:, None] * (onehot - probs)
    # dH/dlogits_j = -p_j (log p_j + H); the loss carries -ent_coef * mean(H)
    g_logits += ent_coef * probs * (logp_all + ent[:, None]) / n
    g_values = vf_coef * 2.0 * (values - returns) / n
    actor_grads = actor.backward(a_acts, g_logits)
    critic_grads = critic.backward(c_acts, g_values[:, None])
    return parts, actor_grads, critic_grads
