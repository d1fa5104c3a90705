import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ranspinn.autodiff import loss_gradient
from ranspinn.net import DenseNet, InputScaling, NetworkEnsemble, ensemble_predict, eval_spatial_jets, init_params, n_params
from ranspinn.physics import FIELDS


def _reference_forward(params, sizes, x):
    """Independent forward pass that walks the documented flat layout."""
    off, h = 0, x
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        W = np.array([[params[off + r * b + c] for c in range(b)] for r in range(a)])
        off += a * b
        bias = params[off : off + b]
        off += b
        h = h @ W + bias
        if i < len(sizes) - 2:
            h = np.tanh(h)
    return h[:, 0]


def test_param_count_and_layout():
    sizes = (3, 5, 4, 1)
    assert n_params(sizes) == 3 * 5 + 5 + 5 * 4 + 4 + 4 * 1 + 1
    p = np.random.default_rng(0).normal(size=n_params(sizes))
    x = np.random.default_rng(1).normal(size=(7, 3))
    np.testing.assert_allclose(DenseNet(sizes).forward(p, x), _reference_forward(p, sizes, x), rtol=1e-14)


@given(st.lists(st.integers(1, 40), min_size=2, max_size=5), st.integers(0, 2**31))
def test_glorot_bounds_and_zero_biases(sizes, seed):
    p = init_params(sizes, seed)
    off = 0
    for a, b in zip(sizes[:-1], sizes[1:]):
        w = p[off : off + a * b]
        assert np.all(np.abs(w) <= np.sqrt(6.0 / (a + b)))
        off += a * b
        assert np.all(p[off : off + b] == 0.0)
        off += b
    assert off == len(p)
    np.testing.assert_array_equal(p, init_params(sizes, seed))


def test_glorot_variance():
    w = init_params((200, 300), 0)[: 200 * 300]
    assert np.var(w) == pytest.approx(2.0 / 500, rel=0.03)


@pytest.mark.parametrize("sizes", [(), (3,), (3, 0, 1), (3, 2.5, 1)])
def test_bad_sizes(sizes):
    with pytest.raises(ValueError):
        n_params(sizes)


def test_multi_output_rejected_and_length_checked():
    with pytest.raises(ValueError):
        DenseNet((3, 4, 2))
    with pytest.raises(ValueError):
        DenseNet((3, 4, 1)).forward(np.zeros(5), np.zeros((1, 3)))


def test_spatial_jets_match_finite_differences():
    rng = np.random.default_rng(5)
    net = DenseNet((3, 8, 8, 1))
    p = rng.normal(size=net.n_params) * 0.8
    pts = rng.uniform(-1, 1, size=(20, 3))
    j = eval_spatial_jets(net, p, pts)
    h = 1e-4
    f = lambda dx, dy: net.forward(p, pts + np.array([dx, dy, 0.0]))
    np.testing.assert_allclose(j.dx, (f(h, 0) - f(-h, 0)) / (2 * h), rtol=1e-6, atol=1e-9)
    np.testing.assert_allclose(j.dy, (f(0, h) - f(0, -h)) / (2 * h), rtol=1e-6, atol=1e-9)
    np.testing.assert_allclose(j.dxx, (f(h, 0) - 2 * f(0, 0) + f(-h, 0)) / h**2, rtol=1e-4, atol=1e-6)
    np.testing.assert_allclose(j.dyy, (f(0, h) - 2 * f(0, 0) + f(0, -h)) / h**2, rtol=1e-4, atol=1e-6)
    dxy = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4 * h * h)
    np.testing.assert_allclose(j.dxy, dxy, rtol=1e-4, atol=1e-6)


def test_input_scaling_maps_to_unit_box():
    pts = np.array([[0.0, 2.0, 1000.0], [1.0, 4.0, 2000.0], [0.5, 3.0, 1500.0]])
    s = InputScaling.from_points(pts)
    z = s.apply(pts)
    np.testing.assert_allclose(z.min(axis=0), -1.0)
    np.testing.assert_allclose(z.max(axis=0), 1.0)
    flat = InputScaling.from_points(np.array([[0.0, 1.0, 500.0], [1.0, 2.0, 500.0]]))
    assert np.all(np.isfinite(flat.apply([[0.0, 1.0, 500.0]])))


def test_ensemble_layout_transforms_and_chain_rule():
    pts = np.random.default_rng(2).uniform(0, 1, size=(9, 3))
    pts[:, 2] = 1000 + 1000 * pts[:, 2]
    ens = NetworkEnsemble.create((6, 6), seed=4, scaling=InputScaling.from_points(pts))
    assert tuple(ens.slices()) == FIELDS
    pred = ens.predict(pts)
    assert np.all(pred["k"] > 0) and np.all(pred["eps"] > 0)
    st_ = ensemble_predict(ens, pts)
    for f in FIELDS:
        np.testing.assert_allclose(st_.field(f).value, pred[f], rtol=1e-14)
    h = 1e-5
    up = ens.predict(pts + [h, 0, 0])["u"]
    dn = ens.predict(pts - [h, 0, 0])["u"]
    np.testing.assert_allclose(st_.u.dx, (up - dn) / (2 * h), rtol=1e-6, atol=1e-8)
    a = NetworkEnsemble.create((6, 6), seed=4)
    b = NetworkEnsemble.create((6, 6), seed=5)
    assert not np.array_equal(a.params, b.params)
    sl = a.slices()
    assert not np.array_equal(a.params[sl["u"]], a.params[sl["v"]])


def test_ensemble_parameter_gradient_through_tape():
    pts = np.random.default_rng(8).uniform(0, 1, size=(5, 3))
    ens = NetworkEnsemble.create((4,), seed=1)

    def loss(theta):
        s = ensemble_predict(ens, pts, theta)
        return ((s.u.dxx + s.v.dy) * s.eps.value).sum() + (s.k.value * s.p.dx).sum()

    def plain(q):
        e2 = ens.copy()
        e2.params = q
        s = ensemble_predict(e2, pts)
        return float(np.sum((s.u.dxx + s.v.dy) * s.eps.value) + np.sum(s.k.value * s.p.dx))

    g = loss_gradient(ens.params, loss)
    h = 1e-6
    fd = np.array([(plain(ens.params + h * e) - plain(ens.params - h * e)) / (2 * h) for e in np.eye(len(ens.params))])
    np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-8)


def test_ensemble_rejects_bad_vectors():
    ens = NetworkEnsemble.create((3,))
    with pytest.raises(ValueError):
        NetworkEnsemble(ens.nets, ens.params[:-1])
    with pytest.raises(ValueError):
        NetworkEnsemble(dict(reversed(list(ens.nets.items()))), ens.params)
