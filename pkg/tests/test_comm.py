import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hqae.baseline import MLPDecoder
from hqae.comm import (ChannelConfig, Constellation, DegenerateConstellation, awgn, channel_apply,
                       export_constellation, qam16, snr_to_sigma)
from hqae.optim import Adam


@pytest.mark.parametrize("snr,sigma", [(15, 0.12574), (0, 0.70711)])
def test_snr_to_sigma(snr, sigma):
    assert snr_to_sigma(snr) == pytest.approx(sigma, abs=5e-6)
    assert snr_to_sigma(snr) == pytest.approx(np.sqrt(1 / (2 * 10 ** (snr / 10))), rel=1e-15)


def test_snr_to_sigma_limit():
    assert snr_to_sigma(np.inf) == 0
    assert snr_to_sigma(200) < 1e-9


def test_qam_normalization():
    table = Constellation(qam16())
    assert table.scale() == pytest.approx(np.sqrt(10), rel=1e-15)
    assert table.average_power() == pytest.approx(1, abs=1e-12)
    assert np.allclose(table.normalized(), qam16() / np.sqrt(10), atol=1e-15)


def test_qam_export():
    exp = export_constellation(Constellation(qam16()))
    assert exp.min_distance == pytest.approx(2 / np.sqrt(10), abs=1e-12)
    assert abs(exp.average_power - 1) < 1e-9
    assert sorted(exp.labels) == list(range(16))
    assert len(exp.rows()) == 16


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31), c=st.floats(1e-3, 1e3))
def test_normalization_scale_invariant(seed, c):
    raw = np.random.default_rng(seed).normal(size=(16, 2))
    a = Constellation(raw).normalized()
    b = Constellation(c * raw).normalized()
    assert np.allclose(a, b, atol=1e-12)
    assert abs(Constellation(raw).average_power() - 1) < 1e-9


def test_degenerate_table():
    with pytest.raises(DegenerateConstellation):
        Constellation(np.zeros((16, 2))).normalized()
    with pytest.raises(ValueError):
        Constellation(np.zeros((15, 2)))


def test_random_table():
    t = Constellation.random(np.random.default_rng(0))
    assert t.raw.shape == (16, 2)
    assert np.array_equal(t.raw, Constellation.random(np.random.default_rng(0)).raw)


def test_encode():
    table = Constellation(qam16())
    assert np.array_equal(table.encode(5), table.normalized()[5])
    for bad in (-1, 16, 1.5):
        with pytest.raises(ValueError):
            table.encode(bad)


def test_backprop_matches_finite_differences():
    rng = np.random.default_rng(1)
    table = Constellation(rng.normal(size=(16, 2)))
    w = rng.normal(size=(16, 2))

    def f(raw):
        return np.sum(w * np.tanh(Constellation(raw).normalized()))

    g_norm = w / np.cosh(table.normalized()) ** 2
    analytic = table.backprop(g_norm)
    eps = 1e-6
    fd = np.empty_like(table.raw)
    for idx in np.ndindex(16, 2):
        e = np.zeros((16, 2))
        e[idx] = eps
        fd[idx] = (f(table.raw + e) - f(table.raw - e)) / (2 * eps)
    assert np.max(np.abs(analytic - fd)) < 1e-8


def test_channel_variance():
    cfg = ChannelConfig(15.0, seed=3)
    y = channel_apply(np.zeros((10**6, 2)), cfg)
    var = y.var(axis=0)
    assert np.all(np.abs(var / cfg.sigma**2 - 1) < 0.01)


def test_channel_deterministic_and_noiseless():
    x = np.array([0.3, -0.4])
    cfg = ChannelConfig(10.0, seed=1)
    assert np.array_equal(channel_apply(x, cfg, 7), channel_apply(x, cfg, 7))
    assert not np.array_equal(channel_apply(x, cfg, 7), channel_apply(x, cfg, 8))
    assert np.array_equal(channel_apply(x, ChannelConfig(np.inf), 0), x)
    assert np.array_equal(awgn(x, 0.0, np.random.default_rng()), x)
    with pytest.raises(ValueError):
        channel_apply([np.nan, 0], cfg)


def test_adam_zero_gradient():
    opt = Adam(0.1)
    p = {"a": np.array([1.0, -2.0])}
    for _ in range(3):
        opt.step(p, {"a": np.zeros(2)})
    assert np.array_equal(p["a"], [1.0, -2.0])


@pytest.mark.parametrize("g", [1e-3, 0.5, 40.0])
def test_adam_first_step_is_lr(g):
    opt = Adam(0.1)
    p = {"a": np.array([0.0, 0.0])}
    opt.step(p, {"a": np.array([g, -g])})
    # bias-corrected first step is lr * g / (|g| + eps)
    assert np.allclose(p["a"], [-0.1, 0.1], rtol=1e-5)


def test_adam_matches_reference_recursion():
    rng = np.random.default_rng(2)
    grads = rng.normal(size=(20, 3))
    opt = Adam(0.05)
    p = {"w": np.zeros(3)}
    ref, m, v = np.zeros(3), np.zeros(3), np.zeros(3)
    for t, g in enumerate(grads, 1):
        opt.step(p, {"w": g})
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g**2
        ref = ref - 0.05 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    assert np.allclose(p["w"], ref, atol=1e-14)


def test_adam_deterministic_and_round_trip():
    grads = np.random.default_rng(3).normal(size=(10, 4))

    def run(opt, p, gs):
        for g in gs:
            opt.step(p, {"x": g})
        return p["x"]

    a = run(Adam(), {"x": np.ones(4)}, grads)
    b = run(Adam(), {"x": np.ones(4)}, grads)
    assert np.array_equal(a, b)
    opt, p = Adam(), {"x": np.ones(4)}
    run(opt, p, grads[:5])
    resumed = Adam.from_state_dict(opt.state_dict())
    assert np.array_equal(run(resumed, p, grads[5:]), a)


def test_adam_shape_mismatch():
    with pytest.raises(ValueError):
        Adam().step({"a": np.zeros(2)}, {"a": np.zeros(3)})
    with pytest.raises(ValueError):
        Adam().step({"a": np.zeros(2)}, {"b": np.zeros(2)})


def test_mlp_softmax_sums_to_one():
    mlp = MLPDecoder.init(np.random.default_rng(4))
    p = mlp.probs(np.random.default_rng(5).normal(size=(50, 2)) * 10)
    assert p.shape == (50, 16)
    assert np.allclose(p.sum(axis=1), 1, atol=1e-12)


def test_mlp_gradient_matches_finite_differences():
    rng = np.random.default_rng(6)
    mlp = MLPDecoder.init(rng)
    for k in ("b1", "b2"):
        mlp.params[k] = rng.normal(size=mlp.params[k].shape) * 0.3
    msgs = rng.integers(0, 16, 8)
    y = rng.normal(size=(8, 2))
    loss, grads, dy, _ = mlp.loss_gradient(msgs, y)
    eps = 1e-6
    worst = 0.0
    for name, arr in mlp.params.items():
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + eps
            hi = mlp.loss_gradient(msgs, y)[0]
            arr[idx] = old - eps
            lo = mlp.loss_gradient(msgs, y)[0]
            arr[idx] = old
            worst = max(worst, abs((hi - lo) / (2 * eps) - grads[name][idx]))
    for idx in np.ndindex(y.shape):
        e = np.zeros_like(y)
        e[idx] = eps
        d = (mlp.loss_gradient(msgs, y + e)[0] - mlp.loss_gradient(msgs, y - e)[0]) / (2 * eps)
        worst = max(worst, abs(d - dy[idx]))
    assert worst < 1e-5
