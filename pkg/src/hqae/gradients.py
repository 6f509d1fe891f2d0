"""Parameter-shift gradients of decoder probabilities and of the cross-entropy loss.

Every trainable angle in the decoder sits in a Pauli rotation (RX, or one of
the RZ/RY/RZ factors of ROT), so the two-point rule with shift pi/2 is exact:

    dp/da = (p(a + pi/2) - p(a - pi/2)) / 2

Derivatives with respect to encoding weights and input features follow by the
chain rule through ``angle = weight * feature``.

Shot-mode substream schedule: the evaluation of row ``r`` of sample ``i`` in
call ``stream`` draws from ``substream(seed, stream, i, r)``, where row 0 is the
unshifted circuit, rows ``1..S`` the +pi/2 shifts and ``S+1..2S`` the -pi/2
shifts of slots ``0..S-1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .ansatz import N_QUBITS, ParamSet, Template, Variant, as_variant, param_count, template
from .sim import probabilities, run_shifted, run_template, sample_counts, substream

SHIFT = np.pi / 2
LOG_CLIP = 1e-12
# rows of the shifted-angle matrix simulated at once
CHUNK_ROWS = 8192


@dataclass(frozen=True)
class Analytic:
    pass


@dataclass(frozen=True)
class Shots:
    shots: int
    seed: int = 0

    def __post_init__(self):
        if self.shots < 1:
            raise ValueError("shots must be >= 1")


EvalMode = Union[Analytic, Shots]
ANALYTIC = Analytic()


def parse_mode(text: str, seed: int = 0) -> EvalMode:
    """``"analytic"`` or ``"shots:<n>"``."""
    text = str(text).strip().lower()
    if text == "analytic":
        return ANALYTIC
    if text.startswith("shots"):
        _, _, n = text.partition(":")
        return Shots(int(n or 1000), seed)
    raise ValueError(f"unknown eval mode {text!r}")


@dataclass
class GradientRecord:
    d_rotations: np.ndarray
    d_weights: Optional[np.ndarray]
    d_features: np.ndarray

    def flat(self) -> np.ndarray:
        parts = [self.d_rotations.ravel()]
        if self.d_weights is not None:
            parts.append(self.d_weights.ravel())
        parts.append(self.d_features.ravel())
        return np.concatenate(parts)


@dataclass
class LossGradient:
    loss: float
    grads: GradientRecord
    feature_grads: np.ndarray  # (B, 2), d loss / d received signal of each sample
    probs: np.ndarray  # (B, 16) forward distributions


def _measure(probs: np.ndarray, mode: EvalMode, stream: int, sample_ids, rows_per_sample: int) -> np.ndarray:
    if isinstance(mode, Analytic):
        return probs
    out = np.empty_like(probs)
    for j in range(probs.shape[0]):
        i, r = divmod(j, rows_per_sample)
        out[j] = sample_counts(probs[j], mode.shots, substream(mode.seed, stream, int(sample_ids[i]), r))
    return out


def forward_probs(tpl: Template, angles: np.ndarray, mode: EvalMode = ANALYTIC, stream: int = 0) -> np.ndarray:
    """Decoder distributions for each row of ``angles``; shot mode uses row 0 substreams."""
    probs = probabilities(run_template(N_QUBITS, tpl.ops, angles))
    return _measure(probs, mode, stream, np.arange(angles.shape[0]), 1)


def shifted_probs(tpl: Template, angles: np.ndarray, mode: EvalMode = ANALYTIC, stream: int = 0):
    """Forward distributions (B, 16) and slot derivatives dp/da (B, S, 16)."""
    angles = np.atleast_2d(angles)
    batch, n_slots = angles.shape
    rows = 2 * n_slots + 1
    per_chunk = max(1, CHUNK_ROWS // rows)
    probs = np.empty((batch, 16))
    dprobs = np.empty((batch, n_slots, 16))
    for start in range(0, batch, per_chunk):
        stop = min(batch, start + per_chunk)
        p = probabilities(run_shifted(N_QUBITS, tpl.ops, angles[start:stop], SHIFT)).reshape(-1, 16)
        p = _measure(p, mode, stream, np.arange(start, stop), rows).reshape(stop - start, rows, 16)
        probs[start:stop] = p[:, 0]
        dprobs[start:stop] = 0.5 * (p[:, 1 : 1 + n_slots] - p[:, 1 + n_slots :])
    return probs, dprobs


def chain_to_params(tpl: Template, params: ParamSet, features: np.ndarray, d_angles: np.ndarray):
    """Map derivatives w.r.t. angle slots (B, S, ...) onto (rotations, weights, features).

    Returns arrays with leading batch axis: (B, L, 4, 3, ...), (B, L, 4, ...) or
    None, and (B, 2, ...).
    """
    variant = tpl.variant
    features = np.atleast_2d(features)
    batch = d_angles.shape[0]
    tail = d_angles.shape[2:]
    d_rot = d_angles[:, tpl.rot_slots]
    d_enc = d_angles[:, tpl.enc_slots]  # (B, blocks, n_enc, ...)
    feats = list(variant.encoding_features)
    expand = (slice(None),) * 3 + (None,) * len(tail)
    if variant.weighted:
        x = features[:, feats]  # (B, n_enc)
        d_w = x[:, None, :][expand] * d_enc
        d_enc = params.encoding_weights[None][expand] * d_enc
    else:
        d_w = None
    d_x = np.zeros((batch, 2) + tail)
    for i, f in enumerate(feats):
        d_x[:, f] += d_enc[:, :, i].sum(axis=1)
    return d_rot, d_w, d_x


def prob_jacobian(variant, params: ParamSet, x, mode: EvalMode = ANALYTIC, stream: int = 0) -> np.ndarray:
    """Jacobian (16, P + 2) of the decoder distribution.

    Columns: rotations (row-major L x 4 x 3), then encoding weights (L x 4, weighted
    variant only), then the two input features.
    """
    variant = as_variant(variant)
    params.validate(variant)
    tpl = template(variant, params.layers)
    x = np.asarray(x, dtype=float).reshape(1, 2)
    _, dprobs = shifted_probs(tpl, tpl.angles(params, x), mode, stream)
    d_rot, d_w, d_x = chain_to_params(tpl, params, x, dprobs)
    cols = [d_rot[0].reshape(-1, 16)]
    if d_w is not None:
        cols.append(d_w[0].reshape(-1, 16))
    cols.append(d_x[0])
    jac = np.concatenate(cols, axis=0).T
    assert jac.shape == (16, param_count(variant, params.layers) + 2)
    return jac


def loss_gradient(messages, features, variant, params: ParamSet, mode: EvalMode = ANALYTIC,
                  stream: int = 0) -> LossGradient:
    """Mean sparse categorical cross-entropy over a batch and its gradient.

    ``messages`` (B,) are the targets, ``features`` (B, 2) the received signals.
    """
    variant = as_variant(variant)
    params.validate(variant)
    messages = np.asarray(messages, dtype=int).ravel()
    features = np.asarray(features, dtype=float).reshape(-1, 2)
    batch = messages.size
    if batch == 0:
        raise ValueError("empty batch")
    if features.shape[0] != batch:
        raise ValueError("messages and features differ in length")
    tpl = template(variant, params.layers)
    probs, dprobs = shifted_probs(tpl, tpl.angles(params, features), mode, stream)
    rows = np.arange(batch)
    p_true = np.maximum(probs[rows, messages], LOG_CLIP)
    # d loss_i / d angle for each sample, already scaled by 1/B
    d_angles = (-1.0 / (batch * p_true))[:, None] * dprobs[rows, :, messages]
    d_rot, d_w, d_x = chain_to_params(tpl, params, features, d_angles)

    loss = 0.0
    g_rot = np.zeros_like(params.rotations)
    g_w = None if d_w is None else np.zeros_like(params.encoding_weights)
    g_x = np.zeros(2)
    for i in range(batch):
        loss -= np.log(p_true[i])
        g_rot += d_rot[i]
        if g_w is not None:
            g_w += d_w[i]
        g_x += d_x[i]
    record = GradientRecord(g_rot, g_w, g_x)
    return LossGradient(loss / batch, record, d_x, probs)


def _flatten(variant: Variant, params: ParamSet, x) -> np.ndarray:
    parts = [params.rotations.ravel()]
    if variant.weighted:
        parts.append(params.encoding_weights.ravel())
    parts.append(np.asarray(x, dtype=float).ravel())
    return np.concatenate(parts)


def _unflatten(variant: Variant, layers: int, vec: np.ndarray):
    n_rot = layers * N_QUBITS * 3
    rot = vec[:n_rot].reshape(layers, N_QUBITS, 3)
    w = None
    if variant.weighted:
        w = vec[n_rot : n_rot + layers * N_QUBITS].reshape(layers, N_QUBITS)
    return ParamSet(rot, w), vec[-2:]


def finite_difference_jacobian(variant, params: ParamSet, x, epsilon: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian with the same column layout as ``prob_jacobian``."""
    variant = as_variant(variant)
    tpl = template(variant, params.layers)
    base = _flatten(variant, params, x)
    n = base.size
    rows = []
    for sign in (1.0, -1.0):
        for k in range(n):
            vec = base.copy()
            vec[k] += sign * epsilon
            p, feat = _unflatten(variant, params.layers, vec)
            rows.append(tpl.angles(p, feat)[0])
    probs = probabilities(run_template(N_QUBITS, tpl.ops, np.array(rows)))
    return ((probs[:n] - probs[n:]) / (2 * epsilon)).T


def finite_difference_check(variant, params: ParamSet, x, epsilon: float = 1e-6) -> float:
    """Max-abs deviation between parameter-shift and central-difference Jacobians."""
    shift = prob_jacobian(variant, params, x, ANALYTIC)
    fd = finite_difference_jacobian(variant, params, x, epsilon)
    return float(np.max(np.abs(shift - fd)))
