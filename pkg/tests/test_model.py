import numpy as np
import pytest

from mlkan.autodiff import ParamSet, Tape, backward
from mlkan.basis import bspline_values, make_uniform_knots
from mlkan.model import (
    RELU,
    SPLINE,
    KanLayer,
    MlpLayer,
    Network,
    convert_network,
    init_weights,
    load_checkpoint,
    make_kan_network,
    make_mlp_network,
    param_count,
    save_checkpoint,
    vectorize,
    devectorize,
)


def random_kan(widths, n, r, seed, scale=0.1, **kw):
    net = make_kan_network(widths, n, r, **kw)
    init_weights(net, seed, scale=scale)
    return net


class TestLayerForward:
    def test_zero_weights(self):
        net = make_kan_network([2, 3], 8, 3)
        x = np.random.default_rng(0).random((10, 2))
        assert np.array_equal(net.predict(x), np.zeros((10, 3)))

    def test_one_hot_reproduces_basis(self):
        k = make_uniform_knots(0.0, 1.0, 6, 3)
        lay = KanLayer(1, 1, k)
        for col in [0, 3, k.dim - 1]:
            lay.weights[:] = 0.0
            lay.weights[0, 0, col] = 1.0
            net = Network([lay], normalizer="affine")
            x = np.linspace(0.0, 1.0, 50)
            expected = bspline_values(k, x)[:, col]
            assert np.max(np.abs(net.predict(x)[:, 0] - expected)) < 1e-12

    def test_fast_path_matches_coxdeboor(self):
        net = random_kan([1, 1], 8, 3, seed=1)
        rng = np.random.default_rng(2)
        x = rng.random((100, 1))
        tape = Tape()
        out_fast = net.forward_tape(tape, x, order=0)
        out_ref = net.forward_tape(tape, x, order=0, path="coxdeboor")
        diff = np.abs(tape.val(out_fast.v) - tape.val(out_ref.v))
        assert np.max(diff) < 1e-11

    def test_coxdeboor_multilayer(self):
        net = random_kan([2, 4, 1], 6, 4, seed=3)
        rng = np.random.default_rng(4)
        x = rng.random((40, 2))
        tape = Tape()
        a = tape.val(net.forward_tape(tape, x, order=0).v)
        b = tape.val(net.forward_tape(tape, x, order=0, path="coxdeboor").v)
        assert np.max(np.abs(a - b)) < 1e-11


class TestConversions:
    def test_zero_maps_to_zero(self):
        lay = KanLayer(2, 3, make_uniform_knots(0, 1, 4, 2))
        assert np.array_equal(lay.to_relu_weights(), np.zeros_like(lay.weights))

    def test_order1_differencing(self):
        k = make_uniform_knots(0.0, 1.0, 5, 1)
        lay = KanLayer(1, 1, k)
        rng = np.random.default_rng(5)
        lay.weights[:] = rng.standard_normal(lay.weights.shape)
        w = lay.to_relu_weights()[0, 0]
        ws = lay.weights[0, 0]
        # W_j = W~_j - W~_{j-1} from the bidiagonal change of basis
        assert w[0] == pytest.approx(ws[0])
        for j in range(1, k.dim):
            assert w[j] == pytest.approx(ws[j] - ws[j - 1], rel=1e-12)

    @pytest.mark.parametrize("r", [1, 2, 3, 4])
    def test_roundtrip(self, r):
        k = make_uniform_knots(-1.0, 1.0, 8, r)
        lay = KanLayer(3, 2, k)
        rng = np.random.default_rng(6 + r)
        lay.weights[:] = rng.standard_normal(lay.weights.shape)
        back = KanLayer(3, 2, k, lay.to_relu_weights(), RELU).to_spline_weights()
        assert np.max(np.abs(back - lay.weights)) < 1e-10

    @pytest.mark.parametrize("r", [1, 2, 3, 4])
    def test_mode_equivalence(self, r):
        net = random_kan([2, 5, 1], 8, r, seed=7)
        relu_net = convert_network(net, RELU)
        rng = np.random.default_rng(8)
        x = rng.random((200, 2))
        diff = np.abs(net.predict(x) - relu_net.predict(x))
        assert np.max(diff) < 1e-10
        back = convert_network(relu_net, SPLINE)
        assert np.max(np.abs(back.predict(x) - net.predict(x))) < 1e-10


class TestNetwork:
    def test_param_counts(self):
        net = make_kan_network([2, 5, 1], 4, 4)
        assert param_count(net) == 15 * 7 == 105
        poisson = make_kan_network([3, 5, 1], 4, 4, augment="abs0")
        assert param_count(poisson) == 20 * 7 == 140
        mlp = make_mlp_network([2, 20, 20, 1])
        assert param_count(mlp) == 501
        big = make_mlp_network([2, 56, 56, 1])
        assert param_count(big) == 3417

    def test_vectorize_roundtrip(self):
        net = random_kan([2, 3, 1], 4, 3, seed=9)
        flat = vectorize(net)
        net2 = make_kan_network([2, 3, 1], 4, 3)
        devectorize(net2, flat)
        assert np.array_equal(vectorize(net2), flat)
        x = np.random.default_rng(10).random((20, 2))
        assert np.array_equal(net.predict(x), net2.predict(x))

    def test_canonical_ordering(self):
        # flat layout is (layer, output, input, knot)
        net = make_kan_network([2, 2], 2, 2)  # K = 3
        flat = np.arange(net.n_params, dtype=float)
        devectorize(net, flat)
        w = net.layers[0].weights
        assert w[0, 0, 0] == 0.0
        assert w[0, 1, 0] == 3.0  # input index advances by K
        assert w[1, 0, 0] == 6.0  # output index advances by P*K

    def test_width_mismatch(self):
        with pytest.raises(ValueError):
            Network([
                KanLayer(2, 3, make_uniform_knots(0, 1, 4, 2)),
                KanLayer(4, 1, make_uniform_knots(0, 1, 4, 2)),
            ])

    def test_out_of_domain_errors_without_normalizer(self):
        lay = KanLayer(1, 1, make_uniform_knots(0.0, 1.0, 4, 2))
        net = Network([lay], normalizer="none")
        with pytest.raises(ValueError):
            net.predict(np.array([[1.5]]))

    def test_mlp_forward(self):
        net = make_mlp_network([2, 4, 1])
        init_weights(net, 11)
        x = np.random.default_rng(12).standard_normal((5, 2))
        w0, b0 = net.layers[0].weights, net.layers[0].bias
        w1, b1 = net.layers[1].weights, net.layers[1].bias
        expected = np.tanh(x @ w0.T + b0) @ w1.T + b1
        assert np.allclose(net.predict(x), expected, atol=1e-14)

    def test_level_set_augmentation(self):
        net = random_kan([3, 2, 1], 4, 3, seed=13, augment="abs0")
        x = np.array([[0.5, 0.2], [-0.5, 0.2]])
        out = net.predict(x)
        assert out.shape == (2, 1)
        # |x| channel makes the two inputs see identical third coordinates
        net_noaug = Network(net.layers, normalizer="affine")
        direct = net_noaug.predict(np.concatenate([x, np.abs(x[:, :1])], axis=1))
        assert np.allclose(out, direct)


class TestNetworkGradients:
    @pytest.mark.parametrize("factory", [
        lambda: random_kan([2, 5, 1], 8, 3, seed=20),
        lambda: random_kan([2, 4, 4, 1], 4, 4, seed=21),
        lambda: convert_network(random_kan([2, 5, 1], 8, 2, seed=22), RELU),
        lambda: _mlp_with_init(23),
    ])
    def test_grad_matches_fd(self, factory):
        net = factory()
        rng = np.random.default_rng(30)
        x = rng.random((40, net.widths[0]))
        y = rng.standard_normal((40, 1))

        def loss_and_grad(theta):
            devectorize(net, theta)
            pset = ParamSet(theta)
            tape = Tape()
            out = net.forward_tape(tape, x, pset=pset, order=0)
            diff = tape.record("sub", out.v, tape.const(y))
            loss = tape.record("scale", tape.record("sum", tape.record("mul", diff, diff)), c=1.0 / 40)
            backward(tape, loss)
            return float(tape.val(loss)), pset.grad.copy()

        theta = vectorize(net)
        _, g = loss_and_grad(theta)
        step = 1e-5
        num = np.zeros_like(theta)
        for i in range(theta.size):
            tp, tm = theta.copy(), theta.copy()
            tp[i] += step
            tm[i] -= step
            num[i] = (loss_and_grad(tp)[0] - loss_and_grad(tm)[0]) / (2 * step)
        devectorize(net, theta)
        assert np.max(np.abs(g - num)) / (1.0 + np.max(np.abs(num))) < 1e-5

    def test_jet_second_derivative_vs_fd(self):
        net = random_kan([2, 5, 1], 8, 4, seed=24, scale=0.3)
        x0 = np.array([[0.4321, 0.637]])
        seed_dir = np.array([1.0, 0.0])
        u, du, d2u = net.predict_jet(x0, seed_dir)
        step = 1e-4

        def u_at(dx):
            return net.predict(x0 + np.array([[dx, 0.0]]))[0, 0]

        fd1 = (u_at(step) - u_at(-step)) / (2 * step)
        fd2 = (u_at(step) - 2 * u_at(0.0) + u_at(-step)) / step**2
        assert du[0, 0] == pytest.approx(fd1, rel=1e-4)
        assert d2u[0, 0] == pytest.approx(fd2, rel=1e-3)

    def test_jet_matches_between_modes(self):
        net = random_kan([2, 4, 1], 8, 4, seed=25, scale=0.2)
        relu_net = convert_network(net, RELU)
        x = np.random.default_rng(26).random((30, 2))
        for seed_dir in ([1.0, 0.0], [0.0, 1.0]):
            a = net.predict_jet(x, np.array(seed_dir))
            b = relu_net.predict_jet(x, np.array(seed_dir))
            for va, vb in zip(a, b):
                assert np.max(np.abs(va - vb)) < 1e-8


def _mlp_with_init(seed):
    net = make_mlp_network([2, 6, 1])
    init_weights(net, seed)
    return net


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        net = random_kan([2, 3, 1], 4, 3, seed=27, augment=None)
        path = str(tmp_path / "ckpt.npz")
        save_checkpoint(net, path, extra={"note": "test"})
        loaded = load_checkpoint(path)
        x = np.random.default_rng(28).random((10, 2))
        assert np.array_equal(net.predict(x), loaded.predict(x))
        assert loaded.widths == net.widths
