"""End-to-end training and evaluation of the autoencoder."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Optional, Union

import numpy as np

from .ansatz import ParamSet, Variant, as_variant, init_params, template
from .baseline import MLPDecoder
from .comm import N_MESSAGES, Constellation, DegenerateConstellation, snr_to_sigma
from .gradients import ANALYTIC, EvalMode, Shots, forward_probs, loss_gradient, parse_mode
from .optim import Adam
from .sim import substream

log = logging.getLogger(__name__)

# substream ids under the master seed
_INIT_DECODER, _INIT_TABLE, _DATA, _EVAL, _FINAL = range(5)
EVAL_CHUNK = 4096


class TrainingError(RuntimeError):
    pass


class QuantumDecoder:
    kind = "quantum"

    def __init__(self, variant, params: ParamSet, mode: EvalMode = ANALYTIC):
        self.variant = as_variant(variant)
        params.validate(self.variant)
        self.params = params
        self.mode = mode

    def probs(self, y, stream: int = 0) -> np.ndarray:
        y = np.atleast_2d(np.asarray(y, dtype=float))
        tpl = template(self.variant, self.params.layers)
        out = np.empty((y.shape[0], N_MESSAGES))
        for start in range(0, y.shape[0], EVAL_CHUNK):
            stop = min(y.shape[0], start + EVAL_CHUNK)
            # distinct shot substreams per chunk
            out[start:stop] = forward_probs(tpl, tpl.angles(self.params, y[start:stop]), self.mode,
                                            stream * 1_000_003 + start)
        return out

    def trainable(self) -> dict[str, np.ndarray]:
        out = {"rotations": self.params.rotations}
        if self.params.encoding_weights is not None:
            out["weights"] = self.params.encoding_weights
        return out

    def loss_gradient(self, messages, y, stream: int = 0):
        lg = loss_gradient(messages, y, self.variant, self.params, self.mode, stream)
        grads = {"rotations": lg.grads.d_rotations}
        if lg.grads.d_weights is not None:
            grads["weights"] = lg.grads.d_weights
        return lg.loss, grads, lg.feature_grads, lg.probs


class BaselineDecoder(MLPDecoder):
    kind = "baseline"

    def probs(self, y, stream: int = 0) -> np.ndarray:
        return super().probs(y)

    def trainable(self) -> dict[str, np.ndarray]:
        return self.params

    def loss_gradient(self, messages, y, stream: int = 0):
        return super().loss_gradient(messages, y)


Decoder = Union[QuantumDecoder, BaselineDecoder]


def decode(variant, params: ParamSet, y, mode: EvalMode = ANALYTIC) -> np.ndarray:
    """Decoder distribution for one received signal."""
    return QuantumDecoder(variant, params, mode).probs(np.asarray(y, dtype=float).reshape(1, 2))[0]


def predict(probs: np.ndarray) -> np.ndarray:
    """Argmax decision; np.argmax returns the lowest index on ties."""
    return np.argmax(probs, axis=-1)


def ser(table: Constellation, decoder: Decoder, snr_db: float, n_symbols: int = 10_000,
        seed: int = 0) -> float:
    """Symbol error rate on ``n_symbols`` uniform messages with fresh AWGN."""
    if n_symbols < 1:
        raise ValueError("n_symbols must be >= 1")
    rng = substream(seed, _FINAL)
    messages = rng.integers(0, N_MESSAGES, n_symbols)
    noise = rng.standard_normal((n_symbols, 2))
    return _ser_on(table, decoder, messages, noise, snr_to_sigma(snr_db))


def _ser_on(table, decoder, messages, noise, sigma, stream: int = 0) -> float:
    y = table.normalized()[messages] + sigma * noise
    return float(np.mean(predict(decoder.probs(y, stream)) != messages))


@dataclass
class TrainConfig:
    variant: str = "WEIGHTED_DOUBLE_DR"
    layers: int = 16
    steps: int = 1000
    batch_size: int = 64
    learning_rate: float = 0.1
    snr_db: float = 15.0
    eval_mode: str = "analytic"
    seed: int = 0
    eval_every: int = 25
    eval_symbols: int = 10_000
    timing: bool = False

    def validate(self):
        if self.variant.upper() != "BASELINE":
            as_variant(self.variant)
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not np.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite")
        if self.eval_every < 1 or self.eval_symbols < 1:
            raise ValueError("eval_every and eval_symbols must be >= 1")
        self.mode()
        return self

    def mode(self) -> EvalMode:
        return parse_mode(self.eval_mode, seed=self.seed)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class MetricsHistory:
    loss: list[float] = field(default_factory=list)  # loss[t-1] is the batch loss of update t
    ser: dict[int, float] = field(default_factory=dict)  # SER after update t (t=0: initial)
    wall_ms: list[float] = field(default_factory=list)

    def rows(self):
        """(step, loss, ser, wall_ms) rows; missing entries are None."""
        yield 0, None, self.ser.get(0), None
        for t in range(1, len(self.loss) + 1):
            wall = self.wall_ms[t - 1] if self.wall_ms else None
            yield t, self.loss[t - 1], self.ser.get(t), wall

    @property
    def initial_ser(self) -> float:
        return self.ser[0]

    @property
    def first_logged_ser(self) -> float:
        """SER at the first periodic evaluation after training starts."""
        return self.ser[min(t for t in self.ser if t > 0)]

    @property
    def final_ser(self) -> float:
        return self.ser[max(self.ser)]


@dataclass
class TrainResult:
    config: TrainConfig
    table: Constellation
    decoder: Decoder
    history: MetricsHistory
    optimizer: Adam

    @property
    def step(self) -> int:
        return self.optimizer.t


def _fit(cfg: TrainConfig, table: Constellation, decoder: Decoder, callback=None) -> TrainResult:
    opt = Adam(cfg.learning_rate)
    history = MetricsHistory()
    sigma = snr_to_sigma(cfg.snr_db)
    data_rng = substream(cfg.seed, _DATA)
    eval_rng = substream(cfg.seed, _EVAL)
    eval_msgs = eval_rng.integers(0, N_MESSAGES, cfg.eval_symbols)
    eval_noise = eval_rng.standard_normal((cfg.eval_symbols, 2))

    history.ser[0] = _ser_on(table, decoder, eval_msgs, eval_noise, sigma)
    for t in range(1, cfg.steps + 1):
        tic = time.perf_counter()
        msgs = data_rng.integers(0, N_MESSAGES, cfg.batch_size)
        noise = data_rng.standard_normal((cfg.batch_size, 2))
        y = table.normalized()[msgs] + sigma * noise
        loss, grads, dy, _ = decoder.loss_gradient(msgs, y, stream=t)
        if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
            raise TrainingError(f"non-finite loss/gradient at step {t}: loss={loss}, "
                                f"table scale={table.scale():.3g}")
        g_table = np.zeros((N_MESSAGES, 2))
        np.add.at(g_table, msgs, dy)
        grads["embedding"] = table.backprop(g_table)
        opt.step({**decoder.trainable(), "embedding": table.raw}, grads)
        history.loss.append(float(loss))
        if callback is not None:
            callback(t, table, decoder)
        try:
            table.scale()
        except DegenerateConstellation as exc:
            raise TrainingError(f"constellation collapsed at step {t}") from exc
        if cfg.timing:
            history.wall_ms.append((time.perf_counter() - tic) * 1e3)
        if t % cfg.eval_every == 0 or t == cfg.steps:
            history.ser[t] = _ser_on(table, decoder, eval_msgs, eval_noise, sigma, stream=t)
            log.info("step %d loss %.4f ser %.4f", t, loss, history.ser[t])
    return TrainResult(cfg, table, decoder, history, opt)


def train(cfg: TrainConfig, callback=None) -> TrainResult:
    """``callback(step, table, decoder)`` runs after every optimizer update."""
    cfg.validate()
    if cfg.variant.upper() == "BASELINE":
        return baseline_train(cfg, callback)
    variant = as_variant(cfg.variant)
    params = init_params(variant, cfg.layers, substream(cfg.seed, _INIT_DECODER))
    table = Constellation.random(substream(cfg.seed, _INIT_TABLE))
    mode = cfg.mode()
    return _fit(cfg, table, QuantumDecoder(variant, params, mode), callback)


def baseline_train(cfg: TrainConfig, callback=None) -> TrainResult:
    """Train the classical receiver with the same encoder, channel, loss, optimizer and batches."""
    cfg.validate()
    decoder = BaselineDecoder.init(substream(cfg.seed, _INIT_DECODER))
    table = Constellation.random(substream(cfg.seed, _INIT_TABLE))
    return _fit(cfg, table, decoder, callback)


def sweep_snr(table: Constellation, decoder: Decoder, snr_grid, n_symbols: int = 10_000,
              seed: int = 0) -> list[tuple[float, float]]:
    return [(float(snr), ser(table, decoder, snr, n_symbols, seed)) for snr in snr_grid]


def ser_std(rate: float, n_symbols: int) -> float:
    """Monte-Carlo standard deviation of an SER estimate."""
    return float(np.sqrt(max(rate * (1 - rate), 1.0 / n_symbols) / n_symbols))
