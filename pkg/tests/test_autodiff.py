import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tabgan import autodiff as ad
from tabgan.errors import NonScalarRoot, UnsupportedOp


def central_diff(f, x):
    """Central differences with step 1e-4 * max(1, |x_i|)."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        h = 1e-4 * max(1.0, abs(orig))
        x[idx] = orig + h
        fp = f(x)
        x[idx] = orig - h
        fm = f(x)
        x[idx] = orig
        g[idx] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)


def test_square_and_tanh():
    x = ad.leaf(3.0)
    assert ad.grad(ad.mul(x, x), [x])[0] == 6.0
    y = ad.leaf(0.0)
    assert ad.grad(ad.tanh(y), [y])[0] == 1.0


def test_non_scalar_root():
    x = ad.leaf(np.ones(3))
    with pytest.raises(NonScalarRoot):
        ad.grad(ad.mul(x, 2.0), [x])


def test_bce_has_no_second_order_rule():
    x = ad.leaf(np.array([0.3, -1.2]))
    loss = ad.bce_with_logits(x, np.array([1.0, 0.0]))
    g = ad.grad(loss, [x])[0]
    sig = 1 / (1 + np.exp(-x.value))
    np.testing.assert_allclose(g, (sig - [1.0, 0.0]) / 2, rtol=1e-12)
    with pytest.raises(UnsupportedOp):
        ad.grad_as_graph(loss, x)


# ------------------------------------------------------------ random graphs

ACTS = {
    "tanh": ad.tanh,
    "relu": ad.relu,
    "leaky": lambda h: ad.leaky_relu(h, 0.2),
    "softmax": lambda h: ad.softmax(h, axis=1),
    "exp": lambda h: ad.exp(ad.mul(h, 0.3)),
}
KINKED = ("relu", "leaky")


def random_graph(seed):
    """A random two-layer net and loss drawn from the supported op set.

    Returns (params, loss_fn) with loss_fn(list of Node) -> scalar Node.
    Inputs are redrawn until no kinked pre-activation lies near zero.
    """
    r = np.random.default_rng(seed)
    n, d_in, d_h, d_out = r.integers(2, 5), r.integers(2, 5), r.integers(2, 6), r.integers(2, 4)
    act = list(ACTS)[seed % len(ACTS)]
    params = [r.normal(0, 0.7, (d_in, d_h)), r.normal(0, 0.3, (1, d_h)),
              r.normal(0, 0.7, (d_h, d_out)), r.normal(0, 0.3, (1, d_out))]
    while True:
        x = r.normal(0, 1, (n, d_in))
        pre = x @ params[0] + params[1]
        if act not in KINKED or np.abs(pre).min() > 0.05:
            break
    target = np.eye(d_out)[r.integers(d_out, size=n)]
    head = seed % 4

    def loss(ws):
        h = ACTS[act](ad.add(ad.matmul(ad.constant(x), ws[0]), ws[1]))
        out = ad.add(ad.matmul(h, ws[2]), ws[3])
        if head == 0:
            return ad.cross_entropy(out, target)
        if head == 1:
            both = ad.concat([out[:, :1], ad.tanh(out[:, 1:])], axis=1)
            return ad.mean(ad.square(ad.sub(both, target)))
        if head == 2:
            return ad.sum_(ad.norm2(ad.add(out, 0.5), axis=1))
        sm = ad.softmax(out, axis=1)
        return ad.mean(ad.div(ad.log(ad.add(sm, 0.1)), ad.add(ad.exp(ad.mul(out, 0.1)), 1.0)))

    return params, loss


@pytest.mark.parametrize("seed", range(100))
def test_gradients_match_finite_differences(seed):
    params, loss = random_graph(seed)
    leaves = [ad.leaf(p) for p in params]
    got = ad.grad(loss(leaves), leaves)
    for i, p in enumerate(params):
        def f(v, i=i):
            ws = [ad.constant(q) for q in params]
            ws[i] = ad.constant(v)
            return float(loss(ws).value)
        assert rel_err(got[i], central_diff(f, p)) <= 1e-5


def test_backward_returns_every_leaf():
    params, loss = random_graph(7)
    leaves = [ad.leaf(p) for p in params]
    root = loss(leaves)
    out = ad.backward(root)
    assert set(out) == set(leaves)
    for leaf, g in zip(leaves, ad.grad(root, leaves)):
        assert np.array_equal(out[leaf], g)


def test_deterministic():
    params, loss = random_graph(11)
    runs = []
    for _ in range(2):
        leaves = [ad.leaf(p) for p in params]
        runs.append(ad.grad(loss(leaves), leaves))
    for a, b in zip(*runs):
        assert np.array_equal(a, b)


def test_unused_leaf_gets_zero():
    x, y = ad.leaf(np.ones(2)), ad.leaf(np.ones(3))
    gx, gy = ad.grad(ad.sum_(ad.mul(x, x)), [x, y])
    assert gx.tolist() == [2.0, 2.0] and gy.tolist() == [0.0, 0.0, 0.0]


def test_float32_is_preserved():
    x = ad.leaf(np.ones((2, 3), dtype=np.float32))
    w = ad.leaf(np.full((3, 1), 0.5, dtype=np.float32))
    loss = ad.mean(ad.square(ad.sub(ad.tanh(ad.matmul(x, w)), 1.0)))
    assert loss.value.dtype == np.float32
    assert all(g.dtype == np.float32 for g in ad.grad(loss, [x, w]))


# ------------------------------------------------------------ double backward

def test_cubic_second_derivative():
    x = ad.leaf(2.0)
    g = ad.grad_as_graph(ad.mul(ad.mul(x, x), x), x)
    assert g.value == 12.0
    assert ad.grad(g, [x])[0] == 12.0


def test_linear_gradient_is_constant():
    x = ad.leaf(np.array([1.0, -2.0]))
    g = ad.grad_as_graph(ad.sum_(ad.mul(x, 3.0)), x)
    assert g.value.tolist() == [3.0, 3.0]
    assert ad.grad(ad.sum_(g), [x])[0].tolist() == [0.0, 0.0]


@given(st.lists(st.integers(-5, 5), min_size=1, max_size=5), st.integers(-3, 3))
def test_polynomial_second_derivative(coeffs, x0):
    x = ad.leaf(float(x0))
    f, term = ad.constant(0.0), ad.constant(1.0)
    for c in coeffs:
        f = ad.add(f, ad.mul(term, float(c)))
        term = ad.mul(term, x)
    d1 = ad.grad_as_graph(f, x)
    d2 = ad.grad_as_graph(d1, x)
    exact = sum(c * k * (k - 1) * x0 ** (k - 2) for k, c in enumerate(coeffs) if k >= 2)
    assert abs(float(d2.value) - exact) <= 1e-10 * max(1.0, abs(exact))


def penalty(W, b, v, x):
    """(||d/dx sum D(x)|| - 1)^2 averaged over rows, D(x) = tanh(x W + b) v."""
    xn = ad.leaf(x)
    d = ad.matmul(ad.tanh(ad.add(ad.matmul(xn, W), b)), v)
    g = ad.grad_as_graph(ad.sum_(d), xn)
    return ad.mean(ad.square(ad.sub(ad.norm2(g, axis=1), 1.0)))


def test_gradient_penalty_weight_gradient():
    r = np.random.default_rng(3)
    W, b, v = r.normal(0, 1, (3, 4)), r.normal(0, 0.2, (1, 4)), r.normal(0, 1, (4, 1))
    x = r.normal(0, 1, (5, 3))
    Wn = ad.leaf(W)
    got = ad.grad(penalty(Wn, ad.constant(b), ad.constant(v), x), [Wn])[0]
    fd = central_diff(lambda w: float(penalty(ad.constant(w), ad.constant(b), ad.constant(v), x).value), W)
    assert rel_err(got, fd) <= 1e-3
