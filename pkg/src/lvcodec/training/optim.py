"""Adam over a named parameter store, with serialisable state."""

from __future__ import annotations

import numpy as np

from ..layers import ParamStore


class Adam:
    def __init__(self, store: ParamStore, lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.store = store
        # hyperparameters held at float32 precision so checkpoints restore them exactly
        self.lr, self.beta1, self.beta2, self.eps = (float(np.float32(v)) for v in (lr, beta1, beta2, eps))
        self.step_count = 0
        self.m = {k: np.zeros_like(t.data) for k, t in store.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in store.items()}

    def step(self) -> None:
        """Apply one update from the accumulated ``.grad`` fields, in store order."""
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.step_count
        c2 = 1.0 - b2**self.step_count
        for k, t in self.store.items():
            if t.grad is None:
                continue
            g = t.grad
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            if self.lr:
                t.data -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(t.dtype)

    def zero_grad(self) -> None:
        for t in self.store.tensors.values():
            t.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {"adam.step": np.array([self.step_count], np.float32)}
        for k in self.store.tensors:
            out[f"adam.m.{k}"] = self.m[k]
            out[f"adam.v.{k}"] = self.v[k]
        return out

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        self.step_count = int(arrays["adam.step"][0])
        for k, t in self.store.items():
            self.m[k] = np.array(arrays[f"adam.m.{k}"], dtype=t.dtype).reshape(t.shape)
            self.v[k] = np.array(arrays[f"adam.v.{k}"], dtype=t.dtype).reshape(t.shape)
