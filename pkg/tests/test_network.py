import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import mlp_forward_np, mlp_input_grad_np
from tabgan import autodiff as ad
from tabgan.conditioning import SamplerState, cond_matrix
from tabgan.encoder import fit_encoders
from tabgan.errors import ShapeMismatch
from tabgan.network import (
    MLP,
    AdamState,
    adam_step,
    generator_forward,
    gumbel_softmax,
    parameter_count,
)


def test_adam_zero_gradient_keeps_params():
    p = [np.array([1.5, -2.0])]
    s = AdamState()
    for _ in range(3):
        p = adam_step(p, [np.zeros(2)], s)
    assert p[0].tolist() == [1.5, -2.0]


def test_adam_first_step_closed_form():
    s = AdamState(lr=0.1)
    out = adam_step([np.array([0.0])], [np.array([1.0])], s)
    assert out[0][0] == pytest.approx(-0.1 / (1 + 1e-8), rel=1e-12)


@pytest.mark.parametrize("g", [3.0, -0.5])
def test_adam_descends(g):
    p, s = [np.array([0.0])], AdamState(lr=0.01)
    for _ in range(50):
        p = adam_step(p, [np.array([g])], s)
    assert np.sign(p[0][0]) == -np.sign(g)


def test_adam_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        adam_step([np.zeros(2)], [np.zeros(3)], AdamState())


@given(st.lists(st.integers(1, 40), min_size=2, max_size=6))
def test_parameter_count(sizes):
    net = MLP(sizes, np.random.default_rng(0))
    assert net.n_params == parameter_count(sizes) == sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))


def test_forward_and_input_gradient_match_numpy():
    r = np.random.default_rng(1)
    net = MLP((5, 7, 6, 1), r)
    x = r.normal(size=(4, 5))
    np.testing.assert_allclose(net(x), mlp_forward_np(net.params, x)[0], rtol=1e-13)
    xn = ad.leaf(x)
    g = ad.grad(ad.sum_(net.forward(xn)), [xn])[0]
    np.testing.assert_allclose(g, mlp_input_grad_np(net.params, x), rtol=1e-12)


def test_return_features_is_last_hidden_layer():
    r = np.random.default_rng(2)
    net = MLP((3, 4, 5, 2), r)
    x = r.normal(size=(2, 3))
    _, pres, ins = mlp_forward_np(net.params, x)
    _, feats = net.forward(x, return_features=True)
    np.testing.assert_allclose(feats.value, ins[-1], rtol=1e-13)


@pytest.fixture(scope="module")
def gen_setup():
    from datasets import all_kinds
    d = all_kinds(400, seed=3)
    enc = fit_encoders(d, seed=0)
    sampler = SamplerState.fit(enc, enc.encode(d), seed=0)
    bits = sampler.layout.total_bits
    net = MLP((16 + bits, 32, enc.total_width), np.random.default_rng(0))
    segs, opts = sampler.sample_conditions(64)
    cond = cond_matrix(sampler.layout, segs, opts)
    z = np.random.default_rng(1).normal(size=(64, 16))
    return enc, net, z, cond


@pytest.mark.parametrize("train", [False, True])
def test_generator_output_contract(gen_setup, train):
    enc, net, z, cond = gen_setup
    rng = np.random.default_rng(0)
    out, raw = generator_forward(net, z, cond, enc.layout, train=train, rng=rng)
    out = out.value
    assert out.shape == (64, enc.total_width)
    for b in enc.layout:
        if b.has_alpha:
            a = out[:, b.offset]
            assert np.all(np.abs(a) < 1)
        if b.n_options:
            seg = out[:, b.option_offset:b.option_offset + b.n_options]
            np.testing.assert_allclose(seg.sum(axis=1), 1.0, rtol=1e-12)
            if not train:
                assert np.all(np.isin(seg, (0.0, 1.0)))
                assert np.array_equal(np.argmax(seg, 1), np.argmax(raw.value[:, b.option_offset:b.option_offset + b.n_options], 1))


def test_generator_deterministic(gen_setup):
    enc, net, z, cond = gen_setup
    a = generator_forward(net, z, cond, enc.layout, train=True, rng=np.random.default_rng(5))[0].value
    b = generator_forward(net, z, cond, enc.layout, train=True, rng=np.random.default_rng(5))[0].value
    assert np.array_equal(a, b)


def test_gumbel_low_temperature_approaches_argmax():
    logits = ad.constant(np.tile([[0.2, 2.5, -1.0, 1.9]], (2000, 1)))
    dist = []
    for tau in (1.0, 0.1, 0.01):
        y = gumbel_softmax(logits, tau, np.random.default_rng(0)).value
        hot = np.eye(4)[y.argmax(axis=1)]
        dist.append(np.abs(y - hot).sum(axis=1).mean())
    assert dist[0] > dist[1] > dist[2] and dist[2] < 0.05
    # the argmax of the noisy logits follows softmax(logits)
    p = np.exp([0.2, 2.5, -1.0, 1.9])
    p /= p.sum()
    freq = np.bincount(y.argmax(axis=1), minlength=4) / len(y)
    assert np.abs(freq - p).max() < 0.04


def test_float32_network():
    net = MLP((3, 4, 2), np.random.default_rng(0), dtype=np.float32)
    assert all(p.dtype == np.float32 for p in net.params)
    assert net(np.ones((2, 3))).dtype == np.float32
