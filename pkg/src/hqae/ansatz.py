"""Decoder circuits: angle-embedding blocks interleaved with strongly entangling layers."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .sim import GateOp, TemplateOp

N_QUBITS = 4
RING = tuple((q, (q + 1) % N_QUBITS) for q in range(N_QUBITS))


class Variant(str, enum.Enum):
    PLAIN = "PLAIN"
    SINGLE_DR = "SINGLE_DR"
    DOUBLE_DR = "DOUBLE_DR"
    WEIGHTED_DOUBLE_DR = "WEIGHTED_DOUBLE_DR"

    @property
    def weighted(self) -> bool:
        return self is Variant.WEIGHTED_DOUBLE_DR

    @property
    def reuploads(self) -> bool:
        return self is not Variant.PLAIN

    @property
    def encoding_qubits(self) -> tuple[int, ...]:
        if self in (Variant.PLAIN, Variant.SINGLE_DR):
            return (0, 1)
        return (0, 1, 2, 3)

    @property
    def encoding_features(self) -> tuple[int, ...]:
        """Feature index fed into each encoding qubit (qubit q gets feature q mod 2)."""
        return tuple(q % 2 for q in self.encoding_qubits)


def as_variant(v) -> Variant:
    return v if isinstance(v, Variant) else Variant(str(v).upper())


@dataclass
class ParamSet:
    rotations: np.ndarray  # (L, 4, 3)
    encoding_weights: Optional[np.ndarray] = None  # (L, 4), weighted variant only

    @property
    def layers(self) -> int:
        return self.rotations.shape[0]

    def validate(self, variant: Variant):
        variant = as_variant(variant)
        r = np.asarray(self.rotations)
        if r.ndim != 3 or r.shape[1:] != (N_QUBITS, 3) or r.shape[0] < 1:
            raise ValueError(f"rotations must have shape (L, 4, 3), got {r.shape}")
        if variant.weighted:
            if self.encoding_weights is None:
                raise ValueError("weighted variant needs encoding_weights")
            if np.shape(self.encoding_weights) != (r.shape[0], N_QUBITS):
                raise ValueError(f"encoding_weights must have shape ({r.shape[0]}, 4), "
                                 f"got {np.shape(self.encoding_weights)}")
        elif self.encoding_weights is not None:
            raise ValueError(f"{variant.value} takes no encoding weights")

    def copy(self) -> "ParamSet":
        w = None if self.encoding_weights is None else self.encoding_weights.copy()
        return ParamSet(self.rotations.copy(), w)


def param_count(variant, layers: int) -> int:
    variant = as_variant(variant)
    return layers * N_QUBITS * 3 + (layers * N_QUBITS if variant.weighted else 0)


def init_params(variant, layers: int, rng: np.random.Generator) -> ParamSet:
    """Uniform[0, 2pi) rotations; encoding weights start at exactly 1."""
    variant = as_variant(variant)
    if layers < 1:
        raise ValueError("layers must be >= 1")
    rotations = rng.uniform(0.0, 2 * np.pi, size=(layers, N_QUBITS, 3))
    weights = np.ones((layers, N_QUBITS)) if variant.weighted else None
    return ParamSet(rotations, weights)


def encoding_block(variant, x, layer_weights=None) -> list[GateOp]:
    variant = as_variant(variant)
    if (layer_weights is not None) != variant.weighted:
        raise ValueError(f"encoding weights must be given iff the variant is weighted ({variant.value})")
    x = np.asarray(x, dtype=float)
    if x.shape != (2,) or not np.all(np.isfinite(x)):
        raise ValueError(f"feature vector must be 2 finite reals, got {x!r}")
    qubits, feats = variant.encoding_qubits, variant.encoding_features
    w = np.ones(len(qubits)) if layer_weights is None else np.asarray(layer_weights, dtype=float)
    if w.shape != (len(qubits),):
        raise ValueError(f"expected {len(qubits)} encoding weights, got shape {w.shape}")
    return [GateOp("RX", (q,), (w[i] * x[f],)) for i, (q, f) in enumerate(zip(qubits, feats))]


def entangling_layer(layer_rotations) -> list[GateOp]:
    r = np.asarray(layer_rotations, dtype=float)
    if r.shape != (N_QUBITS, 3):
        raise ValueError(f"layer rotations must have shape (4, 3), got {r.shape}")
    ops = [GateOp("ROT", (q,), tuple(r[q])) for q in range(N_QUBITS)]
    ops += [GateOp("CNOT", pair) for pair in RING]
    return ops


@dataclass(frozen=True)
class Template:
    """Circuit structure with angles addressed by slot index.

    ``rot_slots[l, q, k]`` is the slot of rotation angle k on qubit q in layer l;
    ``enc_slots[b, i]`` is the slot of the i-th encoding gate in block b.
    """

    variant: Variant
    layers: int
    ops: tuple[TemplateOp, ...]
    rot_slots: np.ndarray
    enc_slots: np.ndarray
    n_slots: int

    def angles(self, params: ParamSet, features: np.ndarray) -> np.ndarray:
        """Angle matrix (B, n_slots) for a batch of feature vectors (B, 2)."""
        features = np.atleast_2d(np.asarray(features, dtype=float))
        out = np.empty((features.shape[0], self.n_slots))
        out[:, self.rot_slots.ravel()] = params.rotations.ravel()
        enc = features[:, list(self.variant.encoding_features)]  # (B, n_enc)
        if self.variant.weighted:
            out[:, self.enc_slots] = params.encoding_weights[None, :, :] * enc[:, None, :]
        else:
            out[:, self.enc_slots] = enc[:, None, :]
        return out


@lru_cache(maxsize=None)
def template(variant, layers: int) -> Template:
    variant = as_variant(variant)
    if layers < 1:
        raise ValueError("layers must be >= 1")
    ops: list[TemplateOp] = []
    qubits = variant.encoding_qubits
    n_blocks = layers if variant.reuploads else 1
    rot_slots = np.empty((layers, N_QUBITS, 3), dtype=int)
    enc_slots = np.empty((n_blocks, len(qubits)), dtype=int)
    slot = 0

    def add_encoding(b):
        nonlocal slot
        for i, q in enumerate(qubits):
            ops.append(TemplateOp("RX", (q,), (slot,)))
            enc_slots[b, i] = slot
            slot += 1

    for layer in range(layers):
        if variant.reuploads or layer == 0:
            add_encoding(layer)
        for q in range(N_QUBITS):
            rot_slots[layer, q] = range(slot, slot + 3)
            ops.append(TemplateOp("ROT", (q,), tuple(range(slot, slot + 3))))
            slot += 3
        ops.extend(TemplateOp("CNOT", pair) for pair in RING)
    rot_slots.setflags(write=False)
    enc_slots.setflags(write=False)
    return Template(variant, layers, tuple(ops), rot_slots, enc_slots, slot)


def build_circuit(variant, params: ParamSet, x) -> list[GateOp]:
    variant = as_variant(variant)
    params.validate(variant)
    x = np.asarray(x, dtype=float)
    if x.shape != (2,) or not np.all(np.isfinite(x)):
        raise ValueError(f"feature vector must be 2 finite reals, got {x!r}")
    tpl = template(variant, params.layers)
    a = tpl.angles(params, x)[0]
    return [GateOp(op.kind, op.targets, tuple(a[list(op.slots)])) for op in tpl.ops]


def circuit_to_json(circuit: list[GateOp], **meta) -> str:
    return json.dumps({**meta, "gates": [g.to_dict() for g in circuit]}, indent=1)


def circuit_from_json(text: str) -> list[GateOp]:
    return [GateOp.from_dict(d) for d in json.loads(text)["gates"]]
