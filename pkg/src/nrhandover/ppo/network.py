"""Tanh MLPs with explicit reverse-mode gradients."""
from __future__ import annotations

import numpy as np

HIDDEN = (64, 128, 64)


def orthogonal(shape: tuple[int, int], gain: float, rng: np.random.Generator) -> np.ndarray:
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


class Mlp:
    """``in -> hidden... -> out`` with tanh on hidden layers and a linear head.

    Parameters live in ``self.params`` as ``W0, b0, W1, b1, ...``; weights are
    stored (fan_in, fan_out) so a batch ``x`` of shape (B, in) maps as ``x @ W + b``.
    """

    def __init__(self, sizes: list[int], params: dict[str, np.ndarray]):
        self.sizes = list(sizes)
        self.params = params
        for i, (fi, fo) in enumerate(zip(sizes[:-1], sizes[1:])):
            if params[f"W{i}"].shape != (fi, fo) or params[f"b{i}"].shape != (fo,):
                raise ValueError(f"layer {i} shape mismatch for sizes {sizes}")

    @classmethod
    def init(cls, n_in: int, n_out: int, rng: np.random.Generator, *, hidden=HIDDEN,
             head_gain: float = 1.0, hidden_gain: float = np.sqrt(2.0)) -> Mlp:
        sizes = [n_in, *hidden, n_out]
        params = {}
        n_layers = len(sizes) - 1
        for i, (fi, fo) in enumerate(zip(sizes[:-1], sizes[1:])):
            gain = head_gain if i == n_layers - 1 else hidden_gain
            # orthogonal() works on (out, in) like torch, then we transpose to (in, out)
            params[f"W{i}"] = orthogonal((fo, fi), gain, rng).T.copy()
            params[f"b{i}"] = np.zeros(fo)
        return cls(sizes, params)

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def forward(self, x: np.ndarray, keep: bool = False):
        """Return the output; with ``keep=True`` also the activations needed by ``backward``."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.sizes[0]:
            raise ValueError(f"input width {x.shape[-1]} != {self.sizes[0]}")
        acts = [x]
        h = x
        last = self.n_layers - 1
        for i in range(self.n_layers):
            h = h @ self.params[f"W{i}"] + self.params[f"b{i}"]
            if i < last:
                h = np.tanh(h)
            acts.append(h)
        return (h, acts) if keep else h

    def backward(self, acts: list[np.ndarray], grad_out: np.ndarray) -> dict[str, np.ndarray]:
        """Gradients of a scalar loss w.r.t. every parameter, given dloss/doutput."""
        grads = {}
        g = grad_out
        for i in reversed(range(self.n_layers)):
            if i < self.n_layers - 1:
                g = g * (1.0 - acts[i + 1] ** 2)
            grads[f"W{i}"] = acts[i].T @ g
            grads[f"b{i}"] = g.sum(axis=0)
            if i > 0:
                g = g @ self.params[f"W{i}"].T
        return grads

    def copy(self) -> Mlp:
        return Mlp(self.sizes, {k: v.copy() for k, v in self.params.items()})
