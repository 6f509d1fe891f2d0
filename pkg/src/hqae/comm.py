"""Transmitter and channel: learned constellation with average-power normalization, AWGN."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N_MESSAGES = 16
MIN_NORM = 1e-12


class DegenerateConstellation(ValueError):
    pass


def snr_to_sigma(snr_db: float) -> float:
    """Per-dimension noise std for unit average symbol power.

    Total noise power 1/SNR is split evenly over the I and Q dimensions.
    """
    snr_db = float(snr_db)
    if np.isnan(snr_db):
        raise ValueError("snr_db is NaN")
    return float(np.sqrt(0.5 * 10.0 ** (-snr_db / 10.0)))


def qam16() -> np.ndarray:
    """Square 16-QAM grid {+-1, +-3}^2 in Gray-free row-major order."""
    levels = np.array([-3.0, -1.0, 1.0, 3.0])
    i, q = np.meshgrid(levels, levels, indexing="ij")
    return np.stack([i.ravel(), q.ravel()], axis=1)


class Constellation:
    """Trainable 16 x 2 embedding table; ``normalized()`` has unit average power."""

    def __init__(self, raw):
        raw = np.array(raw, dtype=float)
        if raw.shape != (N_MESSAGES, 2):
            raise ValueError(f"embedding must be {N_MESSAGES} x 2, got {raw.shape}")
        self.raw = raw

    @classmethod
    def random(cls, rng: np.random.Generator) -> "Constellation":
        while True:
            raw = rng.standard_normal((N_MESSAGES, 2))
            if np.sqrt(np.mean(np.sum(raw**2, axis=1))) >= 1e-6:
                return cls(raw)

    def scale(self) -> float:
        c = float(np.sqrt(np.mean(np.sum(self.raw**2, axis=1))))
        if not c >= MIN_NORM:
            raise DegenerateConstellation(f"constellation norm {c:.3g} is degenerate")
        return c

    def normalized(self) -> np.ndarray:
        return self.raw / self.scale()

    def encode(self, s) -> np.ndarray:
        s = np.asarray(s)
        if np.any((s < 0) | (s >= N_MESSAGES)) or not np.issubdtype(s.dtype, np.integer):
            raise ValueError(f"messages must be integers in [0, {N_MESSAGES})")
        return self.normalized()[s]

    def backprop(self, grad_normalized: np.ndarray) -> np.ndarray:
        """Gradient w.r.t. ``raw`` given the gradient w.r.t. the normalized table.

        With x = r / c and c^2 = mean_s |r_s|^2:
        dL/dr = (G - x * sum(G * x) / 16) / c
        """
        c = self.scale()
        x = self.raw / c
        return (grad_normalized - x * np.sum(grad_normalized * x) / N_MESSAGES) / c

    def average_power(self) -> float:
        return float(np.mean(np.sum(self.normalized() ** 2, axis=1)))


@dataclass(frozen=True)
class ChannelConfig:
    snr_db: float
    seed: int = 0

    def __post_init__(self):
        if not np.isfinite(self.snr_db) and self.snr_db != np.inf:
            raise ValueError(f"invalid snr_db {self.snr_db}")

    @property
    def sigma(self) -> float:
        return snr_to_sigma(self.snr_db)


def awgn(x: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x + sigma * rng.standard_normal(x.shape)


def channel_apply(x, cfg: ChannelConfig, index: int = 0) -> np.ndarray:
    """y = x + n with n ~ N(0, sigma^2 I); the draw is fixed by (cfg.seed, index)."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("signal must be finite")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.seed, spawn_key=(index,))))
    return awgn(x, cfg.sigma, rng)


@dataclass
class ConstellationExport:
    labels: np.ndarray
    points: np.ndarray
    min_distance: float
    average_power: float

    def rows(self):
        return [(int(s), float(i), float(q)) for s, (i, q) in zip(self.labels, self.points)]


def export_constellation(table: Constellation) -> ConstellationExport:
    pts = table.normalized()
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt(np.sum(diff**2, axis=-1))
    dist[np.diag_indices(N_MESSAGES)] = np.inf
    return ConstellationExport(np.arange(N_MESSAGES), pts, float(dist.min()), table.average_power())
