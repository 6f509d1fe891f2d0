"""Command line front-end.

Every subcommand accepts ``--config FILE`` (flat YAML mapping whose keys are the
long option names with underscores); explicit flags override file values. The
default output root is ``$HQAE_OUTPUT_ROOT`` or ``./runs``.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from .ansatz import Variant, init_params
from .gradients import finite_difference_check
from .comm import export_constellation
from .io import load_checkpoint, provenance, save_checkpoint, write_csv, write_metrics
from .training import TrainConfig, sweep_snr, train
from .transpile import DEFAULT_DEVICES, DeviceModel, report

log = logging.getLogger("hqae")

REPORT_LAYERS = (8, 12, 16, 20, 24)

# per-command defaults; None-valued flags fall back to config file, then here
DEFAULTS = {
    "train": dict(variant="WEIGHTED_DOUBLE_DR", layers=16, steps=1000, batch_size=64, learning_rate=0.1,
                  snr_db=15.0, eval_mode="analytic", seeds=[0], eval_every=25, eval_symbols=10_000,
                  timing=False, jobs=1, name=None),
    "compare-ansatz": dict(layers=8, steps=1000, batch_size=64, learning_rate=0.1, snr_db=15.0,
                           eval_mode="analytic", seeds=[0, 1, 2], eval_every=25, eval_symbols=10_000,
                           timing=False, jobs=1, variants=[v.value for v in Variant]),
    "sweep-snr": dict(checkpoint=None, baseline_checkpoint=None, snr_grid=[0.0, 2.5, 5.0, 7.5, 10.0, 12.5, 15.0,
                                                                           17.5, 20.0],
                      n_symbols=10_000, seed=0),
    "constellation": dict(checkpoint=None),
    "transpile-report": dict(variant="WEIGHTED_DOUBLE_DR", layers=list(REPORT_LAYERS), devices=[],
                             seed=0, no_measure=False, no_reset=False),
    "grad-check": dict(variants=[v.value for v in Variant], layers=[1, 2, 8], seeds=list(range(20)),
                       epsilon=1e-6, tolerance=1e-5),
}


class ConfigError(ValueError):
    pass


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="flat YAML file with option values")
    p.add_argument("--out", type=Path, help="output directory (default $HQAE_OUTPUT_ROOT/<command>)")


def _add_train_options(p: argparse.ArgumentParser, single_variant: bool):
    if single_variant:
        p.add_argument("--variant", help="decoder variant or BASELINE")
        p.add_argument("--layers", type=int)
        p.add_argument("--name", help="run name used in output file names")
    else:
        p.add_argument("--variants", nargs="+")
        p.add_argument("--layers", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--learning-rate", "--lr", type=float)
    p.add_argument("--snr-db", type=float)
    p.add_argument("--eval-mode", help="analytic or shots:<n>")
    p.add_argument("--seeds", type=int, nargs="+")
    p.add_argument("--seed", type=int, dest="seeds", action="append", help="alias for a single --seeds value")
    p.add_argument("--eval-every", type=int)
    p.add_argument("--eval-symbols", type=int)
    p.add_argument("--timing", action="store_const", const=True, help="record wall_ms (not reproducible)")
    p.add_argument("--jobs", type=int, help="parallel worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hqae", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one decoder per seed")
    _add_common(p)
    _add_train_options(p, single_variant=True)

    p = sub.add_parser("compare-ansatz", help="learning curves of all decoder variants")
    _add_common(p)
    _add_train_options(p, single_variant=False)

    p = sub.add_parser("sweep-snr", help="SER versus SNR of a trained model")
    _add_common(p)
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--baseline-checkpoint", type=Path)
    p.add_argument("--snr-grid", type=float, nargs="+")
    p.add_argument("--n-symbols", type=int)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("constellation", help="export the learned constellation")
    _add_common(p)
    p.add_argument("--checkpoint", type=Path)

    p = sub.add_parser("transpile-report", help="depth and per-shot time table")
    _add_common(p)
    p.add_argument("--variant")
    p.add_argument("--layers", type=int, nargs="+")
    p.add_argument("--devices", type=Path, nargs="+", help="device JSON files (default: built-in pair)")
    p.add_argument("--seed", type=int)
    p.add_argument("--no-measure", action="store_const", const=True)
    p.add_argument("--no-reset", action="store_const", const=True)

    p = sub.add_parser("grad-check", help="parameter-shift vs finite differences")
    _add_common(p)
    p.add_argument("--variants", nargs="+")
    p.add_argument("--layers", type=int, nargs="+")
    p.add_argument("--seeds", type=int, nargs="+")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--tolerance", type=float)
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults < config file < explicit flags into a flat dict."""
    cfg = dict(DEFAULTS[args.command])
    if args.config is not None:
        try:
            loaded = yaml.safe_load(Path(args.config).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError(f"config {args.config} must be a flat mapping")
        unknown = set(loaded) - set(cfg) - {"out"}
        if unknown:
            raise ConfigError(f"unknown config keys for {args.command}: {sorted(unknown)}")
        cfg.update(loaded)
    for key, value in vars(args).items():
        if key in ("command", "config", "verbose") or value is None:
            continue
        cfg[key] = value
    root = Path(os.environ.get("HQAE_OUTPUT_ROOT", "runs"))
    cfg["out"] = str(cfg.get("out") or root / args.command)
    return cfg


def _train_config(cfg: dict, variant: str, seed: int) -> TrainConfig:
    return TrainConfig(variant=str(variant).upper(), layers=int(cfg["layers"]), steps=int(cfg["steps"]),
                       batch_size=int(cfg["batch_size"]), learning_rate=float(cfg["learning_rate"]),
                       snr_db=float(cfg["snr_db"]), eval_mode=str(cfg["eval_mode"]), seed=int(seed),
                       eval_every=int(cfg["eval_every"]), eval_symbols=int(cfg["eval_symbols"]),
                       timing=bool(cfg["timing"])).validate()


def _run_one(job):
    tc, out_dir, stem = job
    result = train(tc)
    out_dir = Path(out_dir)
    save_checkpoint(out_dir / f"checkpoint_{stem}.json", result)
    write_metrics(out_dir / f"metrics_{stem}.csv", result.history, tc.to_dict(), tc.seed)
    h = result.history
    return stem, (h.initial_ser, h.first_logged_ser, h.final_ser)


def _dispatch(jobs: list, n_workers: int):
    if n_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(n_workers) as pool:
            return list(pool.map(_run_one, jobs))
    return [_run_one(j) for j in jobs]


def cmd_train(cfg: dict) -> int:
    out = Path(cfg["out"])
    seeds = [int(s) for s in cfg["seeds"]]
    jobs = []
    for seed in seeds:
        tc = _train_config(cfg, cfg["variant"], seed)
        name = cfg.get("name") or (tc.variant if tc.variant == "BASELINE" else f"{tc.variant}_L{tc.layers}")
        jobs.append((tc, out, f"{name}_seed{seed}"))
    for stem, (ser0, _, ser1) in _dispatch(jobs, int(cfg["jobs"])):
        print(f"{stem}: SER {ser0:.4f} -> {ser1:.4f}")
    return 0


def cmd_compare_ansatz(cfg: dict) -> int:
    out = Path(cfg["out"])
    seeds = [int(s) for s in cfg["seeds"]]
    variants = [str(v).upper() for v in cfg["variants"]]
    jobs = [(_train_config(cfg, v, s), out, f"{v}_L{cfg['layers']}_seed{s}") for v in variants for s in seeds]
    results = dict(_dispatch(jobs, int(cfg["jobs"])))
    summary = []
    for v in variants:
        stems = {s: f"{v}_L{cfg['layers']}_seed{s}" for s in seeds}
        curves = {s: load_checkpoint(out / f"checkpoint_{stems[s]}.json").history.ser for s in seeds}
        steps = sorted(curves[seeds[0]])
        write_csv(out / f"curve_{v}.csv", ["step"] + [f"ser_seed{s}" for s in seeds],
                  ([t] + [curves[s][t] for s in seeds] for t in steps),
                  provenance({**cfg, "variant": v}))
        # untrained, first logged point, final
        med = [float(np.median([results[stems[s]][i] for s in seeds])) for i in range(3)]
        summary.append((v, *med))
        print(f"{v:>20}: median SER untrained {med[0]:.4f}, first logged {med[1]:.4f}, final {med[2]:.4f}")
    write_csv(out / "summary.csv",
              ["variant", "median_untrained_ser", "median_first_logged_ser", "median_final_ser"], summary,
              provenance(cfg))
    return 0


def cmd_sweep_snr(cfg: dict) -> int:
    if not cfg.get("checkpoint"):
        raise ConfigError("sweep-snr needs --checkpoint")
    model = load_checkpoint(cfg["checkpoint"])
    grid = [float(s) for s in cfg["snr_grid"]]
    n, seed = int(cfg["n_symbols"]), int(cfg["seed"])
    hybrid = sweep_snr(model.table, model.decoder, grid, n, seed)
    header = ["snr_db", "ser"]
    rows = [[s, r] for s, r in hybrid]
    if cfg.get("baseline_checkpoint"):
        base = load_checkpoint(cfg["baseline_checkpoint"])
        header.append("ser_baseline")
        for row, (_, r) in zip(rows, sweep_snr(base.table, base.decoder, grid, n, seed)):
            row.append(r)
    path = write_csv(Path(cfg["out"]) / "sweep_snr.csv", header, rows, provenance(cfg, seed))
    print(path)
    return 0


def cmd_constellation(cfg: dict) -> int:
    if not cfg.get("checkpoint"):
        raise ConfigError("constellation needs --checkpoint")
    exp = export_constellation(load_checkpoint(cfg["checkpoint"]).table)
    meta = provenance(cfg) + [f"min_distance: {exp.min_distance!r}", f"average_power: {exp.average_power!r}"]
    path = write_csv(Path(cfg["out"]) / "constellation.csv", ["message", "i", "q"], exp.rows(), meta)
    print(path)
    return 0


def load_devices(paths) -> list[DeviceModel]:
    if not paths:
        return [make() for make in DEFAULT_DEVICES.values()]
    devices = []
    for p in paths:
        try:
            devices.append(DeviceModel.from_json(p))
        except (OSError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad device file {p}: {exc}") from exc
    return devices


def cmd_transpile_report(cfg: dict) -> int:
    devices = load_devices(cfg["devices"])
    rows = report(cfg["variant"], [int(x) for x in cfg["layers"]], devices, seed=int(cfg["seed"]),
                  include_measure=not cfg["no_measure"], include_reset=not cfg["no_reset"])
    path = write_csv(Path(cfg["out"]) / "transpile_report.csv",
                     ["device", "layers", "depth", "time_us_per_shot", "swaps"],
                     ([r.device, r.layers, r.depth, r.time_us, r.swaps] for r in rows),
                     provenance({**cfg, "devices": [d.to_dict() for d in devices]}))
    for r in rows:
        print(f"{r.device:>10} L={r.layers:<3} depth={r.depth:<4} {r.time_us:8.2f} us/shot")
    print(path)
    return 0


def cmd_grad_check(cfg: dict) -> int:
    rows, worst = [], 0.0
    for v in cfg["variants"]:
        for layers in cfg["layers"]:
            for seed in cfg["seeds"]:
                rng = np.random.default_rng([int(seed), int(layers)])
                params = init_params(v, int(layers), rng)
                if params.encoding_weights is not None:
                    params.encoding_weights = rng.normal(1.0, 0.5, params.encoding_weights.shape)
                x = rng.normal(0.0, 1.0, 2)
                dev = finite_difference_check(v, params, x, float(cfg["epsilon"]))
                worst = max(worst, dev)
                rows.append((str(v).upper(), layers, seed, dev))
    write_csv(Path(cfg["out"]) / "grad_check.csv", ["variant", "layers", "seed", "max_abs_deviation"], rows,
              provenance(cfg))
    ok = worst < float(cfg["tolerance"])
    print(f"max deviation {worst:.3e} ({'ok' if ok else 'FAIL'}, tolerance {cfg['tolerance']})")
    return 0 if ok else 1


COMMANDS = {
    "train": cmd_train,
    "compare-ansatz": cmd_compare_ansatz,
    "sweep-snr": cmd_sweep_snr,
    "constellation": cmd_constellation,
    "transpile-report": cmd_transpile_report,
    "grad-check": cmd_grad_check,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args)
        return COMMANDS[args.command](cfg)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"hqae {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
