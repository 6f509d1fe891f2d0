"""Lowering decoder circuits to a {RZ, SX, X, CX} device and estimating depth and per-shot time.

Pipeline: fuse runs of single-qubit gates, rewrite each fused unitary in the
ZSX Euler form RZ . SX . RZ . SX . RZ, expand SWAPs into three CX, then route
onto a coupling graph by greedy shortest-path SWAP insertion.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import networkx as nx
import numpy as np

from .ansatz import ParamSet, Variant, as_variant, build_circuit, init_params
from .sim import SINGLE_QUBIT, TWO_QUBIT, GateOp, single_qubit_matrices

BASIS = frozenset({"RZ", "SX", "X", "CNOT"})
# |sin(theta/2)| below this is treated as a pure Z rotation
_DIAG_TOL = 1e-12
# two-qubit gates inspected when choosing where routed operands meet
LOOKAHEAD = 1


@dataclass
class DeviceModel:
    name: str
    edges: list[tuple[int, int]]
    durations: dict[str, float]  # ns per gate kind: rz, sx, x, cx, measure, reset
    n_qubits: int = 5

    def __post_init__(self):
        self.edges = [tuple(sorted((int(a), int(b)))) for a, b in self.edges]
        for a, b in self.edges:
            if a == b or not (0 <= a < self.n_qubits and 0 <= b < self.n_qubits):
                raise ValueError(f"bad coupling edge {(a, b)} for {self.n_qubits} qubits")
        for k in ("rz", "sx", "x", "cx", "measure", "reset"):
            if k not in self.durations:
                raise ValueError(f"device {self.name!r} has no duration for {k!r}")
            if self.durations[k] < 0:
                raise ValueError(f"negative duration for {k!r}")

    @property
    def graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.n_qubits))
        g.add_edges_from(self.edges)
        return g

    def scaled(self, factor: float) -> "DeviceModel":
        return DeviceModel(self.name, list(self.edges), {k: v * factor for k, v in self.durations.items()},
                           self.n_qubits)

    @classmethod
    def from_dict(cls, d: dict) -> "DeviceModel":
        return cls(d["name"], [tuple(e) for e in d["edges"]], dict(d["durations"]), int(d.get("n_qubits", 5)))

    @classmethod
    def from_json(cls, path) -> "DeviceModel":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return {"name": self.name, "n_qubits": self.n_qubits, "edges": [list(e) for e in self.edges],
                "durations": dict(self.durations)}


_COMMON = {"rz": 0.0, "sx": 35.0, "x": 70.0, "measure": 5000.0, "reset": 1000.0}


def t_shaped_device() -> DeviceModel:
    return DeviceModel("t-shaped", [(0, 1), (1, 2), (1, 3), (3, 4)], {**_COMMON, "cx": 480.0})


def linear_device() -> DeviceModel:
    return DeviceModel("linear", [(0, 1), (1, 2), (2, 3), (3, 4)], {**_COMMON, "cx": 330.0})


DEFAULT_DEVICES = {"t-shaped": t_shaped_device, "linear": linear_device}


def zyz_angles(u: np.ndarray) -> tuple[float, float, float]:
    """(theta, phi, lam) with u = exp(i a) RZ(phi) RY(theta) RZ(lam)."""
    u = np.asarray(u, dtype=complex)
    v = u / np.sqrt(np.linalg.det(u))
    theta = 2.0 * np.arctan2(abs(v[1, 0]), abs(v[0, 0]))
    plus = 2.0 * np.angle(v[1, 1])  # phi + lam
    minus = 2.0 * np.angle(v[1, 0]) if abs(v[1, 0]) > _DIAG_TOL else 0.0  # phi - lam
    return float(theta), float((plus + minus) / 2), float((plus - minus) / 2)


def euler_zsx(u: np.ndarray, qubit: int) -> list[GateOp]:
    """Basis gates (time order) implementing ``u`` up to global phase.

    RZ(phi) RY(theta) RZ(lam) = RZ(phi + pi) SX RZ(theta + pi) SX RZ(lam) up to phase;
    a diagonal ``u`` collapses to a single RZ.
    """
    theta, phi, lam = zyz_angles(u)
    if abs(np.sin(theta / 2)) < _DIAG_TOL:
        return [GateOp("RZ", (qubit,), (phi + lam,))]
    return [
        GateOp("RZ", (qubit,), (lam,)),
        GateOp("SX", (qubit,)),
        GateOp("RZ", (qubit,), (theta + np.pi,)),
        GateOp("SX", (qubit,)),
        GateOp("RZ", (qubit,), (phi + np.pi,)),
    ]


def gate_matrix(gate: GateOp) -> np.ndarray:
    return single_qubit_matrices(gate.kind, np.array([gate.angles]).reshape(1, -1))[0]


def decompose_to_basis(circuit: Sequence[GateOp]) -> list[GateOp]:
    """Fuse single-qubit runs and rewrite everything into {RZ, SX, X, CNOT}."""
    out: list[GateOp] = []
    pending: dict[int, np.ndarray] = {}

    def flush(q):
        mat = pending.pop(q, None)
        if mat is not None:
            out.extend(euler_zsx(mat, q))

    for gate in circuit:
        if gate.kind in SINGLE_QUBIT:
            q = gate.targets[0]
            m = gate_matrix(gate)
            pending[q] = m if q not in pending else m @ pending[q]
        elif gate.kind in TWO_QUBIT:
            for q in gate.targets:
                flush(q)
            a, b = gate.targets
            if gate.kind == "CNOT":
                out.append(gate)
            else:
                out += [GateOp("CNOT", (a, b)), GateOp("CNOT", (b, a)), GateOp("CNOT", (a, b))]
        else:
            raise ValueError(f"cannot decompose gate kind {gate.kind!r}")
    for q in sorted(pending):
        flush(q)
    return out


@dataclass
class TranspiledCircuit:
    gates: list[GateOp]
    initial_layout: dict[int, int]  # logical -> physical
    final_layout: dict[int, int]
    n_swaps: int = 0
    depth: int = field(init=False)

    def __post_init__(self):
        self.depth = depth(self.gates)


def _lookahead_cost(dist, layout, upcoming) -> float:
    return float(sum(dist[layout[a]][layout[b]] for a, b in upcoming))


def route(circuit: Sequence[GateOp], device: DeviceModel,
          initial_layout: Optional[dict[int, int]] = None, lookahead: int = LOOKAHEAD) -> TranspiledCircuit:
    """Greedy SWAP insertion along shortest coupling-graph paths.

    A non-adjacent CX on physical qubits at distance d costs d - 1 SWAPs; the two
    operands may meet anywhere along the path. The meeting point is chosen to
    minimise the summed distance of the next ``lookahead`` CXs (ties: move the
    control all the way). The layout persists between gates.
    """
    graph = device.graph
    if not nx.is_connected(graph):
        raise ValueError(f"device {device.name!r} coupling graph is disconnected")
    dist = dict(nx.all_pairs_shortest_path_length(graph))
    n_logical = 1 + max((t for g in circuit for t in g.targets), default=-1)
    if n_logical > device.n_qubits:
        raise ValueError(f"circuit needs {n_logical} qubits, device has {device.n_qubits}")
    if initial_layout is None:
        initial_layout = {q: q for q in range(device.n_qubits)}
    layout = dict(initial_layout)
    if len(set(layout.values())) != len(layout):
        raise ValueError("initial layout is not injective")
    # fill unused physical qubits with placeholder logical ids so SWAPs stay a bijection
    spare_logical = iter(q for q in range(device.n_qubits * 2) if q not in layout)
    for p in sorted(set(range(device.n_qubits)) - set(layout.values())):
        layout[next(spare_logical)] = p
    initial = dict(layout)

    for gate in circuit:
        if gate.kind not in BASIS:
            raise ValueError(f"route expects basis gates, got {gate.kind}")
    cx_positions = [i for i, g in enumerate(circuit) if g.kind == "CNOT"]

    out: list[GateOp] = []
    swaps = 0
    n_cx_seen = 0
    for gate in circuit:
        if gate.kind != "CNOT":
            out.append(GateOp(gate.kind, (layout[gate.targets[0]],), gate.angles))
            continue
        n_cx_seen += 1
        a, b = gate.targets
        path = nx.shortest_path(graph, layout[a], layout[b])
        if len(path) > 2:
            upcoming = [circuit[i].targets for i in cx_positions[n_cx_seen : n_cx_seen + lookahead]]
            best = None
            # control walks k hops forward, target walks the remaining hops back
            for k in range(len(path) - 1, 0, -1):
                trial = dict(layout)
                plan = _walk(path, k, trial)
                cost = _lookahead_cost(dist, trial, upcoming)
                if best is None or cost < best[0]:
                    best = (cost, plan, trial)
            _, plan, layout = best
            for p, q in plan:
                out += [GateOp("CNOT", (p, q)), GateOp("CNOT", (q, p)), GateOp("CNOT", (p, q))]
                swaps += 1
        out.append(GateOp("CNOT", (layout[a], layout[b])))
    return TranspiledCircuit(out, initial, dict(layout), swaps)


def _walk(path: list[int], k: int, layout: dict[int, int]) -> list[tuple[int, int]]:
    """SWAPs moving path[0]'s occupant k-1 hops forward and path[-1]'s occupant back
    until they are adjacent; updates ``layout`` in place."""
    occupant = {p: q for q, p in layout.items()}
    swaps = [(path[i], path[i + 1]) for i in range(k - 1)]
    swaps += [(path[i], path[i - 1]) for i in range(len(path) - 1, k, -1)]
    for p, q in swaps:
        la, lb = occupant[p], occupant[q]
        occupant[p], occupant[q] = lb, la
        layout[la], layout[lb] = q, p
    return swaps


def depth(circuit: Sequence[GateOp]) -> int:
    """Longest dependency chain; every gate counts 1."""
    level: dict[int, int] = {}
    for g in circuit:
        d = 1 + max((level.get(q, 0) for q in g.targets), default=0)
        for q in g.targets:
            level[q] = d
    return max(level.values(), default=0)


_DURATION_KEY = {"RZ": "rz", "SX": "sx", "X": "x", "CNOT": "cx"}


def critical_path_ns(circuit: Sequence[GateOp], device: DeviceModel) -> float:
    finish: dict[int, float] = {}
    for g in circuit:
        try:
            dur = device.durations[_DURATION_KEY[g.kind]]
        except KeyError:
            raise ValueError(f"no duration for gate kind {g.kind!r} on {device.name!r}") from None
        end = max((finish.get(q, 0.0) for q in g.targets), default=0.0) + dur
        for q in g.targets:
            finish[q] = end
    return max(finish.values(), default=0.0)


def estimate_time(tc: TranspiledCircuit, device: DeviceModel, include_measure: bool = True,
                  include_reset: bool = True) -> float:
    """Per-shot execution time in microseconds."""
    ns = critical_path_ns(tc.gates, device)
    if include_measure:
        ns += device.durations["measure"]
    if include_reset:
        ns += device.durations["reset"]
    return ns / 1e3


def transpile(circuit: Sequence[GateOp], device: DeviceModel,
              initial_layout: Optional[dict[int, int]] = None) -> TranspiledCircuit:
    return route(decompose_to_basis(circuit), device, initial_layout)


@dataclass
class ReportRow:
    device: str
    layers: int
    depth: int
    time_us: float
    swaps: int


def report(variant, layer_set: Sequence[int], devices: Sequence[DeviceModel], seed: int = 0,
           include_measure: bool = True, include_reset: bool = True) -> list[ReportRow]:
    """Depth and per-shot time of randomly parameterized decoders for every (device, L)."""
    variant = as_variant(variant)
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.0, 1.0, size=2)
    rows = []
    for device in devices:
        for layers in layer_set:
            params = init_params(variant, layers, np.random.default_rng([seed, layers]))
            tc = transpile(build_circuit(variant, params, x), device)
            rows.append(ReportRow(device.name, layers, tc.depth,
                                  estimate_time(tc, device, include_measure, include_reset), tc.n_swaps))
    return rows
