"""Classical reference receiver: dense 2 -> 32 (ReLU) -> 16 (softmax)."""

from __future__ import annotations

import numpy as np

from .gradients import LOG_CLIP

HIDDEN = 32
N_OUT = 16


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class MLPDecoder:
    def __init__(self, params: dict[str, np.ndarray]):
        self.params = params

    @classmethod
    def init(cls, rng: np.random.Generator, hidden: int = HIDDEN) -> "MLPDecoder":
        # He init for the ReLU layer, Glorot for the output layer
        w1 = rng.normal(0.0, np.sqrt(2.0 / 2), size=(2, hidden))
        w2 = rng.normal(0.0, np.sqrt(2.0 / (hidden + N_OUT)), size=(hidden, N_OUT))
        return cls({"w1": w1, "b1": np.zeros(hidden), "w2": w2, "b2": np.zeros(N_OUT)})

    def probs(self, y: np.ndarray) -> np.ndarray:
        p = self.params
        h = np.maximum(np.atleast_2d(y) @ p["w1"] + p["b1"], 0.0)
        return softmax(h @ p["w2"] + p["b2"])

    def loss_gradient(self, messages, y):
        """Mean cross-entropy, parameter gradients, and d loss / d y per sample."""
        p = self.params
        messages = np.asarray(messages, dtype=int)
        y = np.atleast_2d(np.asarray(y, dtype=float))
        batch = messages.size
        if batch == 0:
            raise ValueError("empty batch")
        pre = y @ p["w1"] + p["b1"]
        h = np.maximum(pre, 0.0)
        probs = softmax(h @ p["w2"] + p["b2"])
        rows = np.arange(batch)
        p_true = np.maximum(probs[rows, messages], LOG_CLIP)
        loss = float(-np.mean(np.log(p_true)))

        # -(1/p_clamped) dp_s/dz = (p_s / p_clamped) (p - onehot)
        dz = probs.copy()
        dz[rows, messages] -= 1.0
        dz *= (probs[rows, messages] / p_true)[:, None] / batch
        grads = {"w2": h.T @ dz, "b2": dz.sum(axis=0)}
        dh = (dz @ p["w2"].T) * (pre > 0)
        grads["w1"] = y.T @ dh
        grads["b1"] = dh.sum(axis=0)
        dy = dh @ p["w1"].T
        return loss, grads, dy, probs

    def state_dict(self) -> dict:
        return {k: v.tolist() for k, v in self.params.items()}

    @classmethod
    def from_state_dict(cls, d: dict) -> "MLPDecoder":
        return cls({k: np.array(v, dtype=float) for k, v in d.items()})
