from __future__ import annotations

import numpy as np


class Adam:
    """Adam with bias correction over a dict of named numpy arrays (updated in place)."""

    def __init__(self, lr: float = 0.1, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        if set(params) != set(grads):
            raise ValueError(f"parameter/gradient keys differ: {sorted(params)} vs {sorted(grads)}")
        for k in sorted(params):
            if np.shape(grads[k]) != np.shape(params[k]):
                raise ValueError(f"gradient shape {np.shape(grads[k])} != parameter shape "
                                 f"{np.shape(params[k])} for {k!r}")
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for k in sorted(params):
            g = np.asarray(grads[k], dtype=float)
            if k not in self.m:
                self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            m_hat = self.m[k] / bc1
            v_hat = self.v[k] / bc2
            params[k] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_dict(self) -> dict:
        return {
            "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps, "t": self.t,
            "m": {k: v.tolist() for k, v in self.m.items()},
            "v": {k: v.tolist() for k, v in self.v.items()},
        }

    @classmethod
    def from_state_dict(cls, d: dict) -> "Adam":
        opt = cls(d["lr"], d["beta1"], d["beta2"], d["eps"])
        opt.t = int(d["t"])
        opt.m = {k: np.array(v, dtype=float) for k, v in d["m"].items()}
        opt.v = {k: np.array(v, dtype=float) for k, v in d["v"].items()}
        return opt
