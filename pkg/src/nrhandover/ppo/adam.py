from __future__ import annotations

import numpy as np


class NonFiniteGradientError(FloatingPointError):
    pass


class Adam:
    """Bias-corrected Adam over a flat ``{path: array}`` parameter mapping, updated in place."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for path, g in grads.items():
            if g.shape != params[path].shape:
                raise ValueError(f"{path}: grad shape {g.shape} != param shape {params[path].shape}")
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradientError(f"non-finite gradient in {path}")
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for path, g in grads.items():
            if path not in self.m:
                self.m[path] = np.zeros_like(g)
                self.v[path] = np.zeros_like(g)
            m, v = self.m[path], self.v[path]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            params[path] -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def state_dict(self) -> dict:
        return {"t": self.t, "m": self.m, "v": self.v,
                "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps}

    def load_state_dict(self, state: dict) -> None:
        self.t = int(state["t"])
        self.m = {k: np.array(v, dtype=float) for k, v in state["m"].items()}
        self.v = {k: np.array(v, dtype=float) for k, v in state["v"].items()}
