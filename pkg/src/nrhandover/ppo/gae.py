from __future__ import annotations

import numpy as np


def compute_gae(rewards, values, dones, gamma: float, lam: float, last_value: float = 0.0,
                last_done: bool = False):
    """Generalized advantage estimates and value targets.

    ``dones[t]`` marks that the episode ended on step ``t``; no value is bootstrapped
    across it. ``last_value`` is V(s_T) for the state following the final step.
    Returns ``(advantages, targets)`` with ``targets = advantages + values``.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=float)
    n = len(rewards)
    adv = np.zeros(n)
    next_adv = 0.0
    next_value = last_value
    for t in reversed(range(n)):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * live - values[t]
        next_adv = delta + gamma * lam * live * next_adv
        adv[t] = next_adv
        next_value = values[t]
    return adv, adv + values
