"""Dense statevector simulation of small parameterized circuits.

Basis convention: qubit ``i`` contributes ``2**i`` to the basis index, so
qubit 0 is the least significant bit.

All kernels operate on a batch of states of shape ``(N, 2**n)`` where every
row may carry its own gate angles. The single-state API (``apply_gate``,
``apply_circuit``) is a thin wrapper over the batched kernels with ``N = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numba
import numpy as np

MAX_QUBITS = 12

# number of angles per gate kind
ARITY = {"RX": 1, "RY": 1, "RZ": 1, "ROT": 3, "CNOT": 0, "SWAP": 0, "SX": 0, "X": 0}
SINGLE_QUBIT = frozenset({"RX", "RY", "RZ", "ROT", "SX", "X"})
TWO_QUBIT = frozenset({"CNOT", "SWAP"})

_SX = 0.5 * np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]])
_X = np.array([[0, 1], [1, 0]], dtype=complex)


@dataclass(frozen=True)
class GateOp:
    kind: str
    targets: tuple[int, ...]
    angles: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in ARITY:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        object.__setattr__(self, "angles", tuple(float(a) for a in self.angles))
        if len(self.angles) != ARITY[self.kind]:
            raise ValueError(f"{self.kind} takes {ARITY[self.kind]} angles, got {len(self.angles)}")
        n_targets = 2 if self.kind in TWO_QUBIT else 1
        if len(self.targets) != n_targets:
            raise ValueError(f"{self.kind} acts on {n_targets} qubit(s), got {self.targets}")
        if len(set(self.targets)) != len(self.targets):
            raise ValueError(f"repeated target in {self.targets}")
        if min(self.targets) < 0:
            raise ValueError(f"negative qubit index in {self.targets}")

    def inverse(self) -> "GateOp":
        if self.kind in ("RX", "RY", "RZ"):
            return GateOp(self.kind, self.targets, (-self.angles[0],))
        if self.kind == "ROT":
            phi, theta, omega = self.angles
            # (RZ(w) RY(t) RZ(p))^-1 = RZ(-p) RY(-t) RZ(-w)
            return GateOp("ROT", self.targets, (-omega, -theta, -phi))
        if self.kind == "SX":
            raise ValueError("SX inverse is not in the gate set")
        return self

    def to_dict(self) -> dict:
        return {"kind": self.kind, "targets": list(self.targets), "angles": list(self.angles)}

    @classmethod
    def from_dict(cls, d: dict) -> "GateOp":
        return cls(d["kind"], tuple(d["targets"]), tuple(d.get("angles", ())))


def init_state(n_qubits: int) -> np.ndarray:
    """Return |0...0> as a complex vector of length ``2**n_qubits``."""
    if not isinstance(n_qubits, (int, np.integer)) or not 1 <= n_qubits <= MAX_QUBITS:
        raise ValueError(f"n_qubits must be an integer in [1, {MAX_QUBITS}], got {n_qubits!r}")
    state = np.zeros(2**n_qubits, dtype=complex)
    state[0] = 1.0
    return state


def n_qubits_of(state: np.ndarray) -> int:
    dim = state.shape[-1]
    n = dim.bit_length() - 1
    if 1 << n != dim or n < 1:
        raise ValueError(f"state dimension {dim} is not a power of two")
    return n


def single_qubit_matrices(kind: str, angles: np.ndarray) -> np.ndarray:
    """Batched 2x2 unitaries for a single-qubit gate kind.

    ``angles`` has shape ``(N, arity)``; the result has shape ``(N, 2, 2)``.
    ROT(phi, theta, omega) = RZ(omega) @ RY(theta) @ RZ(phi).
    """
    angles = np.asarray(angles, dtype=float)
    n = angles.shape[0]
    if kind == "SX":
        return np.broadcast_to(_SX, (n, 2, 2))
    if kind == "X":
        return np.broadcast_to(_X, (n, 2, 2))
    out = np.empty((n, 2, 2), dtype=complex)
    if kind == "RX":
        c, s = np.cos(angles[:, 0] / 2), np.sin(angles[:, 0] / 2)
        out[:, 0, 0] = c
        out[:, 0, 1] = -1j * s
        out[:, 1, 0] = -1j * s
        out[:, 1, 1] = c
    elif kind == "RY":
        c, s = np.cos(angles[:, 0] / 2), np.sin(angles[:, 0] / 2)
        out[:, 0, 0] = c
        out[:, 0, 1] = -s
        out[:, 1, 0] = s
        out[:, 1, 1] = c
    elif kind == "RZ":
        e = np.exp(-0.5j * angles[:, 0])
        out[:, 0, 0] = e
        out[:, 0, 1] = 0
        out[:, 1, 0] = 0
        out[:, 1, 1] = e.conj()
    elif kind == "ROT":
        phi, theta, omega = angles[:, 0], angles[:, 1], angles[:, 2]
        c, s = np.cos(theta / 2), np.sin(theta / 2)
        plus = np.exp(-0.5j * (phi + omega))
        minus = np.exp(0.5j * (phi - omega))
        out[:, 0, 0] = plus * c
        out[:, 0, 1] = -minus * s
        out[:, 1, 0] = minus.conj() * s
        out[:, 1, 1] = plus.conj() * c
    else:
        raise ValueError(f"{kind} is not a single-qubit gate")
    return out


@lru_cache(maxsize=None)
def _permutation(kind: str, a: int, b: int, n: int) -> np.ndarray:
    idx = np.arange(2**n)
    if kind == "CNOT":
        return np.where((idx >> a) & 1, idx ^ (1 << b), idx)
    if kind == "SWAP":
        diff = ((idx >> a) ^ (idx >> b)) & 1
        return np.where(diff, idx ^ ((1 << a) | (1 << b)), idx)
    raise ValueError(f"{kind} is not a two-qubit gate")


@numba.njit(cache=True)
def _apply_1q_inplace(states, mats, qubit):  # pragma: no cover - compiled
    bit = 1 << qubit
    for r in range(states.shape[0]):
        m00, m01 = mats[r, 0, 0], mats[r, 0, 1]
        m10, m11 = mats[r, 1, 0], mats[r, 1, 1]
        for i in range(states.shape[1]):
            if i & bit:
                continue
            j = i | bit
            a0 = states[r, i]
            a1 = states[r, j]
            states[r, i] = m00 * a0 + m01 * a1
            states[r, j] = m10 * a0 + m11 * a1


def apply_matrix_batch(states: np.ndarray, mats: np.ndarray, qubit: int, out=None) -> np.ndarray:
    """Apply 2x2 matrices ``mats`` (..., 2, 2) to ``qubit`` of ``states`` (..., 2**n).

    Leading axes of ``mats`` broadcast against the leading axes of ``states``.
    With ``out=states`` the update happens in place (``states`` must be C-contiguous).
    """
    n_qubits_of(states)
    if not 0 <= qubit < n_qubits_of(states):
        raise ValueError(f"qubit index {qubit} out of range")
    if out is None:
        out = np.array(states, dtype=complex, order="C")
    dim = out.shape[-1]
    flat = out.reshape(-1, dim)
    mats = np.broadcast_to(np.asarray(mats, dtype=complex), out.shape[:-1] + (2, 2))
    _apply_1q_inplace(flat, np.ascontiguousarray(mats).reshape(-1, 2, 2), qubit)
    return out


def matmul2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched 2x2 product ``a @ b``; faster than np.matmul for tiny matrices."""
    out = np.empty(np.broadcast_shapes(a.shape, b.shape), dtype=complex)
    for i in (0, 1):
        for j in (0, 1):
            out[..., i, j] = a[..., i, 0] * b[..., 0, j] + a[..., i, 1] * b[..., 1, j]
    return out


def apply_permutation_batch(states: np.ndarray, kind: str, a: int, b: int) -> np.ndarray:
    return states[:, _permutation(kind, a, b, n_qubits_of(states))]


def _check_targets(targets: Sequence[int], n: int):
    for t in targets:
        if not 0 <= t < n:
            raise ValueError(f"qubit index {t} out of range for {n} qubits")


def apply_gate(state: np.ndarray, gate: GateOp) -> np.ndarray:
    """Return ``state`` with ``gate`` applied (input is not modified)."""
    state = np.asarray(state, dtype=complex)
    n = n_qubits_of(state)
    _check_targets(gate.targets, n)
    batch = state.reshape(1, -1)
    if gate.kind in TWO_QUBIT:
        out = apply_permutation_batch(batch, gate.kind, *gate.targets)
    else:
        mats = single_qubit_matrices(gate.kind, np.array([gate.angles]))
        out = apply_matrix_batch(batch, mats, gate.targets[0])
    return out.reshape(state.shape)


def apply_circuit(state: np.ndarray, circuit: Iterable[GateOp]) -> np.ndarray:
    for gate in circuit:
        state = apply_gate(state, gate)
    return np.asarray(state, dtype=complex)


@dataclass(frozen=True)
class TemplateOp:
    """A gate whose angles are read from columns ``slots`` of an angle matrix."""

    kind: str
    targets: tuple[int, ...]
    slots: tuple[int, ...] = ()


@lru_cache(maxsize=256)
def _segments(ops: tuple[TemplateOp, ...], n_qubits: int) -> tuple:
    """Split a template into fused single-qubit runs and two-qubit gates.

    Each item is ``(qubit, ops_tuple)`` for a run of single-qubit gates on one
    wire, or a two-qubit ``TemplateOp``.
    """
    out = []
    pending: dict[int, list] = {}
    for op in ops:
        _check_targets(op.targets, n_qubits)
        if op.kind in TWO_QUBIT:
            for q in op.targets:
                if q in pending:
                    out.append((q, tuple(pending.pop(q))))
            out.append(op)
        else:
            pending.setdefault(op.targets[0], []).append(op)
    for q in sorted(pending):
        out.append((q, tuple(pending[q])))
    return tuple(out)


def _run_matrix(ops: Sequence[TemplateOp], angles: np.ndarray) -> np.ndarray:
    """Product of a run of single-qubit gates, later gates on the left."""
    mat = None
    for op in ops:
        lead = angles.shape[:-1]
        flat = angles[..., list(op.slots)].reshape(int(np.prod(lead)), len(op.slots))
        m = single_qubit_matrices(op.kind, flat).reshape(lead + (2, 2))
        mat = m if mat is None else matmul2(m, mat)
    return mat


def run_template(n_qubits: int, ops: Sequence[TemplateOp], angles: np.ndarray) -> np.ndarray:
    """Simulate one circuit template for every row of ``angles`` starting from |0...0>.

    Runs of single-qubit gates on the same wire are multiplied into one 2x2
    matrix per row before touching the state.
    """
    angles = np.atleast_2d(np.asarray(angles, dtype=float))
    states = np.zeros((angles.shape[0], 2**n_qubits), dtype=complex)
    states[:, 0] = 1.0
    for seg in _segments(tuple(ops), n_qubits):
        if isinstance(seg, TemplateOp):
            states = apply_permutation_batch(states, seg.kind, *seg.targets)
        else:
            q, run = seg
            apply_matrix_batch(states, _run_matrix(run, angles), q, out=states)
    return states


def run_shifted(n_qubits: int, ops: Sequence[TemplateOp], angles: np.ndarray, shift: float) -> np.ndarray:
    """Simulate every single-slot shift of a template.

    For base angles (B, S) returns states (B, 2S + 1, 2**n): row 0 is the
    unshifted circuit, row ``1 + k`` has slot k shifted by ``+shift`` and row
    ``1 + S + k`` by ``-shift``. A shifted circuit shares its prefix with the
    unshifted one, so its row is only split off at the first gate reading the
    shifted slot.
    """
    angles = np.atleast_2d(np.asarray(angles, dtype=float))
    batch, n_slots = angles.shape
    segments = _segments(tuple(ops), n_qubits)

    # activation order of slots = order of first use
    rank = {}
    for seg in segments:
        if not isinstance(seg, TemplateOp):
            for op in seg[1]:
                for s in op.slots:
                    rank.setdefault(s, len(rank))
    unused = [s for s in range(n_slots) if s not in rank]

    # internal layout (rows, B, dim) with rows [base, +r0, -r0, +r1, -r1, ...],
    # r = rank, so the rows in use always form a contiguous prefix
    states = np.zeros((1 + 2 * len(rank), batch, 2**n_qubits), dtype=complex)
    states[:, :, 0] = 1.0
    active = 1
    for seg in segments:
        if isinstance(seg, TemplateOp):
            perm = _permutation(seg.kind, *seg.targets, n_qubits)
            states[:active] = states[:active][..., perm]
            continue
        q, run = seg
        slots = sorted({s for op in run for s in op.slots}, key=rank.get)
        top = 1 + 2 * (rank[slots[-1]] + 1) if slots else active
        if top > active:
            states[active:top] = states[0]
        active = max(active, top)

        # base matrix plus one matrix per (slot, sign) of this run
        variants = np.repeat(angles[None, :, :], 1 + 2 * len(slots), axis=0)
        for j, s in enumerate(slots):
            variants[1 + 2 * j, :, s] += shift
            variants[2 + 2 * j, :, s] -= shift
        local = _run_matrix(run, variants)
        mats = np.empty((active, batch, 2, 2), dtype=complex)
        mats[:] = local[0]
        for j, s in enumerate(slots):
            r = rank[s]
            mats[1 + 2 * r : 3 + 2 * r] = local[1 + 2 * j : 3 + 2 * j]
        apply_matrix_batch(states[:active], mats, q, out=states[:active])

    out = np.empty((batch, 2 * n_slots + 1, 2**n_qubits), dtype=complex)
    out[:, 0] = states[0]
    for s, r in rank.items():
        out[:, 1 + s] = states[1 + 2 * r]
        out[:, 1 + n_slots + s] = states[2 + 2 * r]
    for s in unused:
        out[:, 1 + s] = states[0]
        out[:, 1 + n_slots + s] = states[0]
    return out


def probabilities(state: np.ndarray) -> np.ndarray:
    """Computational-basis probabilities |a_b|^2 (works on batches too)."""
    state = np.asarray(state)
    return state.real**2 + state.imag**2


def sample_counts(p: np.ndarray, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Empirical outcome frequencies from ``shots`` draws of distribution ``p``.

    Outcomes are drawn by inverse-CDF lookup of uniform variates from ``rng``.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    p = np.asarray(p, dtype=float)
    cdf = np.cumsum(p)
    cdf /= cdf[-1]
    outcomes = np.searchsorted(cdf, rng.random(shots), side="right")
    outcomes = np.minimum(outcomes, p.size - 1)
    return np.bincount(outcomes, minlength=p.size) / shots


def substream(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator for the substream ``key`` of master ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=tuple(key))))
