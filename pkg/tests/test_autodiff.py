import math

import numpy as np
import pytest

from mlkan.autodiff import (
    ELEMENTARY_OPS,
    Jet,
    ParamSet,
    Tape,
    backward,
    forward_jet,
    jet_add,
    jet_banded,
    jet_clip,
    jet_div,
    jet_input,
    jet_mul,
    jet_scale,
    jet_unary,
)


def fd_grad(f, x, step=1e-5):
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        g[i] = (f(xp) - f(xm)) / (2 * step)
    return g


class TestRecord:
    def test_relu_pow_partials(self):
        t = Tape()
        x = t.const(0.5)
        node = t.record("relu_pow", x, p=3)
        v, d1, d2 = t.local_partials(node)
        assert v == pytest.approx(0.125)
        assert d1 == pytest.approx(0.75)
        assert d2 == pytest.approx(3.0)

    def test_relu_pow_left_of_knot(self):
        t = Tape()
        x = t.const(-0.2)
        node = t.record("relu_pow", x, p=3)
        assert np.array_equal(t.local_partials(node), (0.0, 0.0, 0.0))

    def test_abs_subgradient_zero(self):
        t = Tape()
        x = t.const(0.0)
        node = t.record("abs", x)
        _, d1, _ = t.local_partials(node)
        assert d1 == 0.0

    def test_invalid_operand(self):
        t = Tape()
        with pytest.raises(IndexError):
            t.record("add", 0, 1)

    def test_elementary_ops_recordable(self):
        t = Tape()
        x = t.const(np.array([0.3, -0.7]))
        y = t.const(np.array([1.5, 2.0]))
        for op in ELEMENTARY_OPS:
            if op in ("add", "sub", "mul", "div"):
                t.record(op, x, y)
            elif op == "pow_int":
                t.record(op, x, k=3)
            elif op == "relu_pow":
                t.record(op, x, p=2)
            else:
                t.record(op, x)


class TestBackward:
    def test_square(self):
        pset = ParamSet([3.0])
        t = Tape()
        p = t.param(pset, 0, ())
        loss = t.record("mul", p, p)
        backward(t, loss)
        assert pset.grad[0] == pytest.approx(6.0)

    def test_sin_product_chain(self):
        pset = ParamSet([2.0, 0.5])
        t = Tape()
        p = t.param(pset, 0, ())
        q = t.param(pset, 1, ())
        loss = t.record("sin", t.record("mul", p, q))
        backward(t, loss)
        assert pset.grad[0] == pytest.approx(0.5 * math.cos(1.0), rel=1e-12)
        assert pset.grad[1] == pytest.approx(2.0 * math.cos(1.0), rel=1e-12)

    def test_output_not_on_tape(self):
        t = Tape()
        t.const(1.0)
        with pytest.raises(IndexError):
            backward(t, 5)

    def test_non_scalar_output_rejected(self):
        t = Tape()
        x = t.const(np.arange(3.0))
        with pytest.raises(ValueError):
            backward(t, x)

    def test_three_layer_chain_vs_fd(self):
        rng = np.random.default_rng(0)
        theta = rng.standard_normal(12)
        x_data = rng.standard_normal(50)

        def loss_fn(th):
            pset = ParamSet(th)
            t = Tape()
            x = t.const(x_data)
            h = t.record("tanh", t.record("add", t.record("mul", t.param(pset, 0, ()), x), t.param(pset, 1, ())))
            h = t.record("sigmoid", t.record("add", t.record("mul", t.param(pset, 2, ()), h), t.param(pset, 3, ())))
            out = t.record("add", t.record("mul", t.param(pset, 4, ()), h), t.param(pset, 5, ()))
            for j in range(6, 12):
                out = t.record("sin", t.record("mul", t.param(pset, j, ()), out))
            sq = t.record("mul", out, out)
            return t, t.record("scale", t.record("sum", sq), c=1.0 / x_data.size), pset

        t, loss, pset = loss_fn(theta)
        backward(t, loss)
        num = fd_grad(lambda th: loss_fn(th)[0].val(loss_fn(th)[1]), theta)

        def scalar_loss(th):
            tt, ll, _ = loss_fn(th)
            return float(tt.val(ll))

        num = fd_grad(scalar_loss, theta)
        denom = 1.0 + np.max(np.abs(num))
        assert np.max(np.abs(pset.grad - num)) / denom < 1e-5

    def test_broadcast_grad(self):
        pset = ParamSet(np.array([1.5, -0.5, 2.0]))
        cst = np.arange(12.0).reshape(4, 3)

        def scalar_loss(th):
            pset2 = ParamSet(th)
            t = Tape()
            w = t.param(pset2, 0, (3,))
            prod = t.record("mul", t.const(cst), w)
            s = t.record("sum", prod)
            return float(t.val(t.record("mul", s, s)))

        t = Tape()
        w = t.param(pset, 0, (3,))
        prod = t.record("mul", t.const(cst), w)
        s = t.record("sum", prod)
        loss = t.record("mul", s, s)
        backward(t, loss)
        num = fd_grad(scalar_loss, pset.values)
        assert np.allclose(pset.grad, num, rtol=1e-6, atol=1e-8)

    def test_determinism(self):
        rng = np.random.default_rng(1)
        pset = ParamSet(rng.standard_normal(5))
        t = Tape()
        w = t.param(pset, 0, (5,))
        y = t.record("tanh", t.record("mul", w, w))
        loss = t.record("sum", y)
        backward(t, loss)
        g1 = pset.grad.copy()
        pset.zero_grad()
        backward(t, loss)
        assert np.array_equal(g1, pset.grad)

    def test_structural_ops_vs_fd(self):
        rng = np.random.default_rng(2)
        m, k_dim, q = 7, 5, 3
        x_data = rng.standard_normal((m, k_dim))
        diagonals = [0.5 + rng.random(k_dim), rng.standard_normal(k_dim - 1)]
        theta = rng.standard_normal(q * 2 * k_dim)

        def build(th):
            pset = ParamSet(th)
            t = Tape()
            w = t.param(pset, 0, (q, 2, k_dim))
            b0 = t.record("banded", t.const(x_data), diagonals=diagonals)
            b1 = t.const(np.cos(x_data))
            out = t.record("kan_contract", w, b0, b1)
            c = t.record("col", out, j=1)
            sq = t.record("mul", c, c)
            return t, t.record("sum", sq), pset

        t, loss, pset = build(theta)
        backward(t, loss)
        num = fd_grad(lambda th: float(build(th)[0].val(build(th)[1])), theta)
        assert np.max(np.abs(pset.grad - num)) / (1 + np.max(np.abs(num))) < 1e-6


class TestJets:
    def test_cubic_monomial(self):
        def builder(t, jet):
            return jet_unary(t, "pow_int", jet, k=3)

        _, _, (v, d1, d2) = forward_jet(builder, 2.0, 1.0)
        assert v == pytest.approx(8.0)
        assert d1 == pytest.approx(12.0)
        assert d2 == pytest.approx(12.0)

    def test_sin_at_zero(self):
        _, _, (v, d1, d2) = forward_jet(lambda t, j: jet_unary(t, "sin", j), 0.0, 1.0)
        assert (v, d1, d2) == (0.0, 1.0, 0.0)

    def test_product_rule(self):
        # f(x) = x * sin(x); f' = sin + x cos; f'' = 2cos - x sin
        x0 = 0.7

        def builder(t, j):
            return jet_mul(t, j, jet_unary(t, "sin", j))

        _, _, (v, d1, d2) = forward_jet(builder, x0, 1.0)
        assert v == pytest.approx(x0 * math.sin(x0), rel=1e-12)
        assert d1 == pytest.approx(math.sin(x0) + x0 * math.cos(x0), rel=1e-12)
        assert d2 == pytest.approx(2 * math.cos(x0) - x0 * math.sin(x0), rel=1e-12)

    def test_quotient_rule(self):
        from mlkan.autodiff import jet_shift

        x0 = 0.3

        def builder(t, j):
            # (1 + x)/(1 + x^2)
            denom = jet_add(t, jet_mul(t, j, j), jet_input(t, np.asarray(1.0), 0.0))
            num = jet_shift(t, j, t.const(1.0))
            return jet_div(t, num, denom)

        f = lambda x: (1 + x) / (1 + x * x)
        eps = 1e-6
        _, _, (v, d1, d2) = forward_jet(builder, x0, 1.0)
        assert v == pytest.approx(f(x0), rel=1e-12)
        assert d1 == pytest.approx((f(x0 + eps) - f(x0 - eps)) / (2 * eps), rel=1e-8)
        assert d2 == pytest.approx((f(x0 + eps) - 2 * f(x0) + f(x0 - eps)) / eps**2, rel=1e-3)

    def test_jet_scale_and_clip(self):
        def builder(t, j):
            return jet_clip(t, jet_scale(t, j, 2.0), lo=-1.0, hi=1.0)

        _, _, (v, d1, d2) = forward_jet(builder, 0.2, 1.0)
        assert (v, d1, d2) == (0.4, 2.0, 0.0)
        _, _, (v, d1, d2) = forward_jet(builder, 3.0, 1.0)
        assert (v, d1, d2) == (1.0, 0.0, 0.0)

    def test_jet_banded_linear(self):
        rng = np.random.default_rng(3)
        diags = [np.ones(4), -np.ones(3)]
        x = rng.standard_normal((5, 4))
        s = rng.standard_normal((5, 4))
        t = Tape()
        j = jet_input(t, x, s)
        out = jet_banded(t, j, diags)
        from mlkan.autodiff import _banded_apply

        assert np.allclose(t.val(out.d1), _banded_apply(s, diags, False))

    def test_backward_through_jet(self):
        # d/dp of (d/dx p*x^2)^2 at x=1.5: inner jet d1 = 2 p x, loss = (2px)^2
        pset = ParamSet([0.8])
        x0 = 1.5
        t = Tape()
        p = t.param(pset, 0, ())
        j = jet_input(t, np.asarray(x0), 1.0)
        x_sq = jet_mul(t, j, j)
        d1 = x_sq.d1  # node for 2x
        prod = t.record("mul", p, d1)
        loss = t.record("mul", prod, prod)
        backward(t, loss)
        assert pset.grad[0] == pytest.approx(2 * 0.8 * (2 * x0) ** 2, rel=1e-12)

    def test_jet_second_derivative_vs_fd_of_first(self):
        # consistency: d2 equals FD of d1
        def builder(t, j):
            return jet_unary(t, "tanh", jet_mul(t, j, j))

        def d1_at(x):
            _, _, (_, d1, _) = forward_jet(builder, x, 1.0)
            return float(d1)

        x0, eps = 0.4, 1e-6
        _, _, (_, _, d2) = forward_jet(builder, x0, 1.0)
        fd = (d1_at(x0 + eps) - d1_at(x0 - eps)) / (2 * eps)
        assert d2 == pytest.approx(fd, rel=1e-6)

    def test_unsupported_jet_op(self):
        t = Tape()
        j = jet_input(t, 0.5, 1.0)
        with pytest.raises(ValueError):
            jet_unary(t, "abs", j)
