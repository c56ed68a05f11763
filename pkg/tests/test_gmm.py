import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from datasets import bimodal
from tabgan.gmm import GaussianMixture1D, argmax_mode, fit_gmm, responsibilities


@pytest.fixture(scope="module")
def two_mode_fit():
    x = bimodal(np.random.default_rng(2024), 5000)
    trace = []
    return fit_gmm(x, k_max=10, seed=0, trace=trace), trace, x


def test_two_mode_recovery(two_mode_fit):
    gm, _, _ = two_mode_fit
    assert gm.k == 2
    assert abs(gm.means[0] - 0.0) <= 0.3 and abs(gm.means[1] - 10.0) <= 0.3
    assert np.all(np.abs(gm.weights - 0.5) <= 0.05)


def test_em_log_likelihood_monotone(two_mode_fit):
    _, trace, _ = two_mode_fit
    assert trace
    for run in trace:
        steps = np.diff(run)
        # EM never decreases the likelihood; allow float round-off relative to its size
        assert np.all(steps >= -1e-9 * np.abs(np.asarray(run[1:])))


def test_invariants(two_mode_fit):
    gm, _, x = two_mode_fit
    assert abs(gm.weights.sum() - 1.0) <= 1e-9
    assert np.all(np.diff(gm.means) > 0)
    assert np.all(gm.stds >= 1e-6 * x.std())
    assert 1 <= gm.k <= 10


def test_single_gaussian():
    x = np.random.default_rng(5).normal(5.0, 2.0, 5000)
    gm = fit_gmm(x, 10, seed=1)
    dom = int(np.argmax(gm.weights))
    assert abs(gm.means[dom] - 5.0) <= 0.2
    assert 1.0 - gm.weights[dom] <= 0.05


def test_constant_column():
    gm = fit_gmm(np.full(20, 7.0), 10, seed=0)
    assert gm.k == 1 and gm.means[0] == 7.0 and gm.stds[0] == 1e-6


def test_deterministic_given_seed():
    x = bimodal(np.random.default_rng(1), 800)
    a, b = fit_gmm(x, 10, seed=4), fit_gmm(x, 10, seed=4)
    assert a == b


@pytest.mark.parametrize("a,b", [(3.0, -2.0), (-0.5, 7.0), (1e3, 1e4)])
def test_affine_equivariance(a, b):
    x = bimodal(np.random.default_rng(9), 1000, 0, 6, 1.0, 0.3)
    g0 = fit_gmm(x, 10, seed=2)
    g1 = fit_gmm(a * x + b, 10, seed=2)
    assert g0.k == g1.k
    order = np.argsort(a * g0.means + b)
    np.testing.assert_allclose(g1.means, (a * g0.means + b)[order], rtol=1e-6, atol=1e-6 * abs(b))
    np.testing.assert_allclose(g1.stds, (abs(a) * g0.stds)[order], rtol=1e-6)
    np.testing.assert_allclose(g1.weights, g0.weights[order], rtol=1e-6)


SYM = GaussianMixture1D([0.5, 0.5], [0.0, 4.0], [1.0, 1.0])


def test_responsibility_examples():
    np.testing.assert_allclose(responsibilities(SYM, 2.0), [0.5, 0.5], atol=1e-15)
    far = GaussianMixture1D([0.5, 0.5], [0.0, 20.0], [1.0, 1.0])
    assert responsibilities(far, 0.0)[0] >= 1 - 1e-12
    assert responsibilities(SYM, 1.0)[0] == pytest.approx(1 / (1 + math.exp(-4)), abs=1e-12)


def test_argmax_examples():
    far = GaussianMixture1D([0.5, 0.5], [0.0, 20.0], [1.0, 1.0])
    assert argmax_mode(far, 0.0) == 0
    assert argmax_mode(SYM, 2.0) == 0
    assert argmax_mode(SYM, 3.0) == 1


@given(st.floats(-50, 50))
def test_responsibilities_sum_to_one(tau):
    gm = GaussianMixture1D([0.2, 0.3, 0.5], [-3.0, 0.5, 9.0], [0.5, 2.0, 1.5])
    assert abs(responsibilities(gm, tau).sum() - 1.0) <= 1e-12


def test_serialization_round_trip(two_mode_fit):
    gm = two_mode_fit[0]
    assert GaussianMixture1D.from_dict(gm.to_dict()) == gm
