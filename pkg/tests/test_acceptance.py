"""End-to-end acceptance checks, one test per criterion.

Training runs are shared between criteria and memoized per session. Setting
HQAE_ACCEPTANCE_CACHE to a directory also persists them across sessions as
checkpoints (plus the per-step power log needed by criterion 8).
"""

import json
import os
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

from hqae.ansatz import Variant, init_params
from hqae.cli import main
from hqae.comm import ChannelConfig, Constellation, channel_apply, export_constellation, snr_to_sigma
from hqae.gradients import finite_difference_check
from hqae.io import load_checkpoint, save_checkpoint
from hqae.sim import apply_circuit, init_state, probabilities
from hqae.training import QuantumDecoder, TrainConfig, ser, ser_std, train
from hqae.transpile import linear_device, report, t_shaped_device
from oracle import circuit_unitary, random_circuit, random_state

SEEDS = (0, 1, 2)
# every final SER is measured on the same 10^4 fresh symbols (independent of all training streams)
FRESH_SEED = 12345
N_FRESH = 10_000


@dataclass
class Run:
    result: object
    fresh_ser: float
    power_dev: float  # max |average power - 1| over all training steps


@lru_cache(maxsize=None)
def trained(variant: str, layers: int, seed: int) -> Run:
    cfg = TrainConfig(variant=variant, layers=layers, seed=seed)
    cache = os.environ.get("HQAE_ACCEPTANCE_CACHE")
    stem = f"{variant}_L{layers}_seed{seed}"
    if cache:
        ckpt, side = Path(cache) / f"{stem}.json", Path(cache) / f"{stem}.power.json"
        if ckpt.is_file() and side.is_file():
            res = load_checkpoint(ckpt)
            return Run(res, ser(res.table, res.decoder, 15.0, N_FRESH, FRESH_SEED), json.loads(side.read_text()))
    devs = []
    res = train(cfg, callback=lambda t, table, dec: devs.append(abs(table.average_power() - 1)))
    assert len(devs) == cfg.steps
    if cache:
        save_checkpoint(ckpt, res)
        side.write_text(json.dumps(max(devs)))
    return Run(res, ser(res.table, res.decoder, 15.0, N_FRESH, FRESH_SEED), max(devs))


def median_fresh(variant, layers):
    return float(np.median([trained(variant, layers, s).fresh_ser for s in SEEDS]))


def test_criterion_1_simulator_oracle(report_criterion):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        circ = random_circuit(rng, 4, int(rng.integers(1, 61)))
        psi = random_state(rng, 4) if rng.random() < 0.5 else init_state(4)
        ours = probabilities(apply_circuit(psi, circ))
        ref = np.abs(circuit_unitary(circ, 4) @ psi) ** 2
        worst = max(worst, float(np.max(np.abs(ours - ref))))
    ok = report_criterion(1, "simulator vs dense oracle", worst < 1e-10,
                          f"max abs error {worst:.2e} over 100 circuits (< 1e-10)")
    assert ok


def _embedding_fd_deviation(variant, params, rng) -> float:
    dec = QuantumDecoder(variant, params)
    table = Constellation(rng.normal(size=(16, 2)))
    msgs = rng.integers(0, 16, 4)
    noise = snr_to_sigma(15.0) * rng.normal(size=(4, 2))

    clip = 1e-12
    p0 = dec.probs(table.normalized()[msgs] + noise)[np.arange(4), msgs]

    def loss(raw):
        # below the clip the gradient convention divides by the clamped value,
        # i.e. it differentiates the tangent surrogate p / clip
        p = dec.probs(Constellation(raw).normalized()[msgs] + noise)[np.arange(4), msgs]
        return -np.mean(np.where(p0 >= clip, np.log(np.maximum(p, clip)), p / clip))

    _, _, dy, _ = dec.loss_gradient(msgs, table.normalized()[msgs] + noise)
    g = np.zeros((16, 2))
    np.add.at(g, msgs, dy)
    analytic = table.backprop(g)
    eps = 1e-6
    fd = np.empty((16, 2))
    for idx in np.ndindex(16, 2):
        e = np.zeros((16, 2))
        e[idx] = eps
        fd[idx] = (loss(table.raw + e) - loss(table.raw - e)) / (2 * eps)
    return float(np.max(np.abs(analytic - fd)))


@pytest.mark.slow
def test_criterion_2_gradient_exactness(report_criterion):
    worst_jac, worst_emb = 0.0, 0.0
    for variant in Variant:
        for layers in (1, 2, 8):
            for seed in range(20):
                rng = np.random.default_rng([seed, layers])
                params = init_params(variant, layers, rng)
                if params.encoding_weights is not None:
                    params.encoding_weights = rng.normal(1.0, 0.5, params.encoding_weights.shape)
                worst_jac = max(worst_jac, finite_difference_check(variant, params, rng.normal(size=2)))
                worst_emb = max(worst_emb, _embedding_fd_deviation(variant, params, rng))
    ok = report_criterion(2, "gradient exactness", worst_jac < 1e-5 and worst_emb < 1e-5,
                          f"Jacobian {worst_jac:.2e}, embedding {worst_emb:.2e} (both < 1e-5; "
                          f"4 variants x L in {{1,2,8}} x 20 seeds)")
    assert ok


@pytest.mark.slow
def test_criterion_3_training_vs_baseline(report_criterion):
    hybrid = median_fresh("WEIGHTED_DOUBLE_DR", 16)
    base = median_fresh("BASELINE", 16)
    ok = report_criterion(3, "L=16 weighted vs classical baseline", hybrid <= 2 * base,
                          f"median SER hybrid {hybrid:.4f}, baseline {base:.4f} (need hybrid <= 2x baseline)")
    assert ok


@pytest.mark.slow
def test_weighted_l16_loss_decreases():
    for s in SEEDS:
        loss = trained("WEIGHTED_DOUBLE_DR", 16, s).result.history.loss
        assert np.median(loss[899:1000]) < np.median(loss[:100])


@pytest.mark.slow
def test_criterion_4_ansatz_ordering(report_criterion):
    med = {v.value: median_fresh(v.value, 8) for v in Variant}
    p, s, d, w = (med[k] for k in ("PLAIN", "SINGLE_DR", "DOUBLE_DR", "WEIGHTED_DOUBLE_DR"))
    ordered = p > s > d >= w
    # initial = the untrained model's SER at step 0 on the fixed evaluation set;
    # the first logged curve point (step 25) is printed for reference
    plain = [trained("PLAIN", 8, seed).result.history for seed in SEEDS]
    untrained = float(np.median([h.initial_ser for h in plain]))
    first = float(np.median([h.first_logged_ser for h in plain]))
    final = float(np.median([h.final_ser for h in plain]))
    flat = abs(final - untrained) <= 0.2 * untrained
    ok = report_criterion(
        4, "ansatz ordering at L=8", ordered and flat,
        f"median SER PLAIN {p:.4f} > SINGLE_DR {s:.4f} > DOUBLE_DR {d:.4f} >= WEIGHTED {w:.4f} [{ordered}]; "
        f"PLAIN final {final:.4f} vs initial {untrained:.4f} ({(final - untrained) / untrained:+.1%}, "
        f"need within 20%) [{flat}]; vs first logged point {first:.4f} ({(final - first) / first:+.1%})")
    assert ok


@pytest.mark.slow
def test_criterion_5_snr_generalization(report_criterion):
    grid = [0.0, 5.0, 10.0, 15.0, 20.0]
    ok, parts = True, []
    for seed in SEEDS:
        run = trained("WEIGHTED_DOUBLE_DR", 16, seed).result
        rates = [ser(run.table, run.decoder, snr, N_FRESH, FRESH_SEED) for snr in grid]
        inversions = [(a, b) for a, b in zip(rates, rates[1:]) if b > a]
        fine = len(inversions) == 0 or (
            len(inversions) == 1 and inversions[0][1] - inversions[0][0] <= 2 * ser_std(inversions[0][1], N_FRESH))
        ok &= fine
        parts.append(f"seed {seed}: " + " ".join(f"{r:.4f}" for r in rates) + f" ({len(inversions)} inversions)")
    ok = report_criterion(5, "SER non-increasing over 0..20 dB", ok, "; ".join(parts))
    assert ok


@pytest.mark.slow
def test_criterion_6_layer_trend(report_criterion):
    s8, s16, s24 = (median_fresh("WEIGHTED_DOUBLE_DR", L) for L in (8, 16, 24))
    ok = report_criterion(6, "weighted layer trend", s24 <= s16 <= s8,
                          f"median SER L=24 {s24:.4f} <= L=16 {s16:.4f} <= L=8 {s8:.4f}")
    assert ok


@pytest.mark.slow
def test_baseline_reference_ser():
    rates = [trained("BASELINE", 16, s).fresh_ser for s in SEEDS]
    assert max(rates) < 0.05, rates


@pytest.mark.slow
def test_high_snr_ser():
    for s in SEEDS:
        run = trained("WEIGHTED_DOUBLE_DR", 16, s).result
        assert ser(run.table, run.decoder, 40.0, N_FRESH, FRESH_SEED) <= 1e-3


@pytest.mark.slow
def test_constellation_spread_grows_with_layers():
    dmin = {L: [export_constellation(trained("WEIGHTED_DOUBLE_DR", L, s).result.table).min_distance for s in SEEDS]
            for L in (8, 24)}
    assert np.median(dmin[24]) >= np.median(dmin[8]), dmin


TABLE = {
    "t-shaped": {8: (125, 54.3), 12: (187, 78.4), 16: (260, 111.8), 20: (311, 124.2), 24: (379, 149.8)},
    "linear": {8: (145, 30.4), 12: (221, 43.6), 16: (297, 56.9), 20: (373, 70.12), 24: (449, 83.4)},
}


def test_criterion_7_transpilation(report_criterion):
    layers = [8, 12, 16, 20, 24]
    rows = report(Variant.WEIGHTED_DOUBLE_DR, layers, [t_shaped_device(), linear_device()])
    ok, worst_d, worst_t, r2s = True, 0.0, 0.0, []
    for r in rows:
        ref_d, ref_t = TABLE[r.device][r.layers]
        dd, dt = abs(r.depth - ref_d) / ref_d, abs(r.time_us - ref_t) / ref_t
        worst_d, worst_t = max(worst_d, dd), max(worst_t, dt)
        ok &= dd <= 0.4 and dt <= 0.6
    for name in TABLE:
        d = np.array([r.depth for r in rows if r.device == name], float)
        resid = d - np.polyval(np.polyfit(layers, d, 1), layers)
        r2s.append(1 - resid.var() / d.var())
    ok &= min(r2s) > 0.99
    ok = report_criterion(7, "transpilation vs reference table", ok,
                          f"worst depth deviation {worst_d:.1%} (<= 40%), worst time deviation {worst_t:.1%} "
                          f"(<= 60%), min R^2 {min(r2s):.5f} (> 0.99)")
    assert ok


@pytest.mark.slow
def test_criterion_8_channel_statistics(report_criterion):
    cfg = ChannelConfig(15.0, seed=8)
    y = channel_apply(np.zeros((10**6, 2)), cfg)
    sigma2 = 1 / (2 * 10**1.5)
    var_dev = float(np.max(np.abs(y.var(axis=0) / sigma2 - 1)))
    runs = [trained(v.value, 8, s) for v in Variant for s in SEEDS]
    runs += [trained("WEIGHTED_DOUBLE_DR", L, s) for L in (16, 24) for s in SEEDS]
    runs += [trained("BASELINE", 16, s) for s in SEEDS]
    power = max(r.power_dev for r in runs)
    ok = report_criterion(8, "channel statistics and power constraint", var_dev < 0.01 and power < 1e-9,
                          f"variance deviation {var_dev:.3%} (< 1%); max |power - 1| {power:.1e} over "
                          f"{len(runs)} runs x 1000 steps (< 1e-9)")
    assert ok


@pytest.mark.slow
def test_criterion_9_determinism(report_criterion, tmp_path):
    same = []
    for variant in ("WEIGHTED_DOUBLE_DR", "PLAIN", "BASELINE"):
        args = ["train", "--variant", variant, "--layers", "4", "--steps", "100", "--seed", "7"]
        for tag in ("a", "b"):
            assert main(args + ["--out", str(tmp_path / tag)]) == 0
        name = f"metrics_{variant}_seed7.csv" if variant == "BASELINE" else f"metrics_{variant}_L4_seed7.csv"
        same.append((tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes())
    ok = report_criterion(9, "bitwise reproducible metrics", all(same),
                          f"{sum(same)}/{len(same)} repeated runs byte-identical")
    assert ok
