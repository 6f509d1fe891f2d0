"""Checkpoints and provenance-stamped CSV output."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import platform
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import __version__
from .ansatz import ParamSet, as_variant
from .comm import Constellation
from .gradients import parse_mode
from .optim import Adam
from .training import BaselineDecoder, MetricsHistory, QuantumDecoder, TrainConfig, TrainResult

CHECKPOINT_FORMAT = "hqae-checkpoint/1"


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def provenance(config: dict, seed: Optional[int] = None) -> list[str]:
    lines = [
        f"hqae {__version__}",
        f"config_sha256: {config_hash(config)}",
        f"python {platform.python_version()} numpy {np.__version__}",
        "config: " + json.dumps(config, sort_keys=True, default=str),
    ]
    if seed is not None:
        lines.insert(2, f"seed: {seed}")
    return lines


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence], meta: Sequence[str] = ()) -> Path:
    """UTF-8 CSV with '#'-prefixed metadata lines before the column header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    for line in meta:
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def read_csv(path) -> tuple[list[str], list[dict]]:
    """Returns (metadata lines, rows as dicts of strings)."""
    meta, body = [], []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            meta.append(line[1:].strip())
        else:
            body.append(line)
    return meta, list(csv.DictReader(body))


def write_metrics(path, history: MetricsHistory, config: dict, seed: int) -> Path:
    return write_csv(path, ["step", "loss", "ser", "wall_ms"], history.rows(), provenance(config, seed))


def result_to_dict(result: TrainResult) -> dict:
    dec = result.decoder
    d = {
        "format": CHECKPOINT_FORMAT,
        "kind": dec.kind,
        "config": result.config.to_dict(),
        "seed": result.config.seed,
        "step": result.step,
        "embedding": result.table.raw.tolist(),
        "adam": result.optimizer.state_dict(),
        "history": {"loss": result.history.loss, "ser": {str(k): v for k, v in result.history.ser.items()}},
    }
    if dec.kind == "quantum":
        d["variant"] = dec.variant.value
        d["layers"] = dec.params.layers
        d["rotations"] = dec.params.rotations.tolist()
        w = dec.params.encoding_weights
        d["weights"] = None if w is None else w.tolist()
    else:
        d["mlp"] = dec.state_dict()
    return d


def save_checkpoint(path, result: TrainResult) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(result_to_dict(result)), encoding="utf-8")
    return path


def load_checkpoint(path) -> TrainResult:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint {path} not found")
    d = json.loads(path.read_text(encoding="utf-8"))
    if d.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not an {CHECKPOINT_FORMAT} file")
    cfg = TrainConfig(**d["config"])
    table = Constellation(d["embedding"])
    if d["kind"] == "quantum":
        w = d.get("weights")
        params = ParamSet(np.array(d["rotations"], dtype=float), None if w is None else np.array(w, dtype=float))
        decoder = QuantumDecoder(as_variant(d["variant"]), params, parse_mode(cfg.eval_mode, cfg.seed))
    elif d["kind"] == "baseline":
        decoder = BaselineDecoder.from_state_dict(d["mlp"])
    else:
        raise ValueError(f"unknown checkpoint kind {d['kind']!r}")
    h = d.get("history", {})
    history = MetricsHistory(list(h.get("loss", [])), {int(k): v for k, v in h.get("ser", {}).items()})
    return TrainResult(cfg, table, decoder, history, Adam.from_state_dict(d["adam"]))
