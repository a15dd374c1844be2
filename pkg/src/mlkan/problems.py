"""Experiment problem definitions: regression target, 2d Poisson interface
PINN, 1d viscous Burgers PINN, and the Allen-Cahn PINN.

Each problem owns its data/collocation sets and exposes
``make_closure(net) -> fn(flat) -> (loss, grad, components, metric)`` for
the training driver, plus helpers for reference fields and residual grids.
All randomness is seeded; closures are full-batch and deterministic.
"""

from __future__ import annotations

import math

import numpy as np

from .autodiff import Jet, ParamSet, Tape, backward
from .model import Network, devectorize
from .optim import RbaWeights

__all__ = [
    "RegressionProblem",
    "PoissonProblem",
    "BurgersProblem",
    "AllenCahnProblem",
    "ManufacturedPoissonSolution",
    "raw_regression_target",
    "relative_l2_error",
]


def relative_l2_error(prediction, reference) -> float:
    """||pred - ref||_2 / ||ref||_2 over equally shaped grids."""
    pred = np.asarray(prediction, dtype=np.float64)
    ref = np.asarray(reference, dtype=np.float64)
    if pred.shape != ref.shape:
        raise ValueError("shape mismatch")
    denom = float(np.sqrt(np.sum(ref**2)))
    if denom == 0.0:
        raise ZeroDivisionError("reference grid has zero norm")
    return float(np.sqrt(np.sum((pred - ref) ** 2))) / denom


def _mse_nodes(tape: Tape, out_node: int, target: np.ndarray) -> int:
    diff = tape.record("sub", out_node, tape.const(target))
    sq = tape.record("mul", diff, diff)
    return tape.record("scale", tape.record("sum", sq), c=1.0 / target.shape[0])


def raw_regression_target(x, y, theta: float = 0.175):
    """cos(4 pi x~) + sin(pi y~) + sin(2 pi y~) + |sin(3 pi y~^2)| on
    coordinates rotated counterclockwise by theta."""
    xr = np.cos(theta) * x - np.sin(theta) * y
    yr = np.sin(theta) * x + np.cos(theta) * y
    return (
        np.cos(4 * math.pi * xr)
        + np.sin(math.pi * yr)
        + np.sin(2 * math.pi * yr)
        + np.abs(np.sin(3 * math.pi * yr**2))
    )


class RegressionProblem:
    """Rotated nonsmooth target sampled uniformly on [1e-4, 1-1e-4]^2.

    Targets are affinely normalized to [0, 1] over the dataset; the metric
    is the training MSE on the normalized scale.
    """

    def __init__(self, seed: int = 1234, n_samples: int = 20000, theta: float = 0.175):
        rng = np.random.default_rng(seed)
        lo, hi = 1e-4, 1.0 - 1e-4
        self.x = lo + (hi - lo) * rng.random((n_samples, 2))
        raw = raw_regression_target(self.x[:, 0], self.x[:, 1], theta)
        self.norm_lo = float(np.min(raw))
        self.norm_hi = float(np.max(raw))
        self.y = ((raw - self.norm_lo) / (self.norm_hi - self.norm_lo))[:, None]
        self.theta = theta

    def target(self, x, y):
        raw = raw_regression_target(np.asarray(x), np.asarray(y), self.theta)
        return (raw - self.norm_lo) / (self.norm_hi - self.norm_lo)

    def make_closure(self, net: Network):
        tables = net.first_layer_basis_tables(self.x, seed=None, order=0)

        def closure(flat):
            devectorize(net, flat)
            pset = ParamSet(flat)
            tape = Tape()
            out0 = net.contract_first_layer(tape, tables, pset)
            from . import autodiff as ad

            channels = [ad.jet_col(tape, out0, j=q) for q in range(net.layers[0].Q)]
            out = net.forward_from_channels(tape, channels, pset, start_layer=1)
            loss = _mse_nodes(tape, out.v, self.y)
            backward(tape, loss)
            val = float(tape.val(loss))
            return val, pset.grad.copy(), {}, val

        return closure


class ManufacturedPoissonSolution:
    """Closed-form interface solution with analytic jets, for validation.

    Matches the network evaluation interface far enough to ride through
    the Poisson losses: piecewise sin(pi x) sin(3 pi y) (x < 0) and
    sin(2 pi x) sin(3 pi y) (x >= 0).
    """

    def _pieces(self, x, y):
        left = x < 0
        kx = np.where(left, math.pi, 2 * math.pi)
        u = np.sin(kx * x) * np.sin(3 * math.pi * y)
        ux = kx * np.cos(kx * x) * np.sin(3 * math.pi * y)
        uxx = -(kx**2) * np.sin(kx * x) * np.sin(3 * math.pi * y)
        uy = 3 * math.pi * np.sin(kx * x) * np.cos(3 * math.pi * y)
        uyy = -((3 * math.pi) ** 2) * np.sin(kx * x) * np.sin(3 * math.pi * y)
        return u, ux, uxx, uy, uyy

    def predict(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=np.float64)
        return self._pieces(xy[:, 0], xy[:, 1])[0][:, None]

    def forward_tape(self, tape: Tape, xy, pset=None, seed=None, order: int = 2) -> Jet:
        xy = np.asarray(xy, dtype=np.float64)
        u, ux, uxx, uy, uyy = self._pieces(xy[:, 0], xy[:, 1])
        v = tape.const(u[:, None])
        if seed is None:
            return Jet(v)
        seed = np.asarray(seed, dtype=np.float64)
        d1 = (seed[0] * ux + seed[1] * uy)[:, None]
        d2 = (seed[0] ** 2 * uxx + seed[1] ** 2 * uyy)[:, None]
        if seed[0] != 0.0 and seed[1] != 0.0:
            raise ValueError("mixed seed directions are not supported here")
        return Jet(v, tape.const(d1), tape.const(d2) if order >= 2 else None)

    def forward_tape_multi(self, tape: Tape, xy, pset=None, seeds=(), path="fast"):
        return [self.forward_tape(tape, xy, pset, seed, order) for seed, order in seeds]


class PoissonProblem:
    """2d interface Poisson PINN: div(eps grad u) = f with eps jumping at
    x = 0, zero Dirichlet boundary, flux-jump interface penalty, and
    residual-based attention on the volume term.

    Networks take (x, y) plus a level-set channel |x| (augment="abs0").
    """

    def __init__(self, n_interior: int = 49, n_boundary_per_side: int = 50,
                 gamma_v: float = 1e-2, gamma_b: float = 1.0, gamma_i: float = 1e-1,
                 rba_mu: float = 1e-4, offset: float = 1e-6):
        xs = np.linspace(-1.0, 1.0, n_interior + 2)[1:-1]
        gx, gy = np.meshgrid(xs, xs, indexing="ij")
        self.volume = np.column_stack([gx.ravel(), gy.ravel()])
        side = np.linspace(-1.0, 1.0, n_boundary_per_side)
        ones = np.ones_like(side)
        self.boundary = np.concatenate([
            np.column_stack([-ones, side]),
            np.column_stack([ones, side]),
            np.column_stack([side, -ones]),
            np.column_stack([side, ones]),
        ])
        self.interface_y = xs.copy()
        self.gamma_v = gamma_v
        self.gamma_b = gamma_b
        self.gamma_i = gamma_i
        self.offset = offset
        self.eps_l, self.eps_r = 1.0, 0.5
        self.rba = RbaWeights(self.volume.shape[0], rba_mu)
        self._last_residuals: np.ndarray | None = None
        self._u_ref = ManufacturedPoissonSolution().predict(self.volume)

    def epsilon(self, x):
        return np.where(np.asarray(x) < 0, self.eps_l, self.eps_r)

    def forcing(self, x, y):
        x = np.asarray(x)
        f_l = -10 * math.pi**2 * np.sin(math.pi * x) * np.sin(3 * math.pi * y)
        f_r = -6.5 * math.pi**2 * np.sin(2 * math.pi * x) * np.sin(3 * math.pi * y)
        return np.where(x < 0, f_l, f_r)

    def losses(self, net, tape: Tape | None = None, pset: ParamSet | None = None):
        """(L_V, L_B, L_I, L) as tape nodes; also caches volume residuals."""
        tape = tape if tape is not None else Tape()
        xv, yv = self.volume[:, 0], self.volume[:, 1]
        out_x, out_y = net.forward_tape_multi(
            tape, self.volume, pset=pset,
            seeds=[((1.0, 0.0), 2), ((0.0, 1.0), 2)],
        )
        lap = tape.record("add", out_x.d2, out_y.d2)
        eps = tape.const(self.epsilon(xv)[:, None])
        res = tape.record(
            "sub", tape.record("mul", eps, lap), tape.const(self.forcing(xv, yv)[:, None])
        )
        lam = tape.const(self.rba.lam[:, None])
        l_v = tape.record("sum", tape.record("mul", lam, tape.record("mul", res, res)))

        out_b = net.forward_tape(tape, self.boundary, pset=pset, order=0)
        l_b = tape.record("sum", tape.record("mul", out_b.v, out_b.v))

        y_i = self.interface_y
        left = np.column_stack([np.full_like(y_i, -self.offset), y_i])
        right = np.column_stack([np.full_like(y_i, self.offset), y_i])
        ux_l = net.forward_tape(tape, left, pset=pset, seed=(1.0, 0.0), order=1).d1
        ux_r = net.forward_tape(tape, right, pset=pset, seed=(1.0, 0.0), order=1).d1
        jump = tape.record(
            "sub", tape.record("scale", ux_l, c=self.eps_l), tape.record("scale", ux_r, c=self.eps_r)
        )
        l_i = tape.record("sum", tape.record("mul", jump, jump))

        total = tape.record(
            "add",
            tape.record("add", tape.record("scale", l_v, c=self.gamma_v),
                        tape.record("scale", l_b, c=self.gamma_b)),
            tape.record("scale", l_i, c=self.gamma_i),
        )
        self._last_residuals = np.abs(tape.val(res))[:, 0]
        return tape, l_v, l_b, l_i, total

    def make_closure(self, net: Network):
        def closure(flat):
            devectorize(net, flat)
            pset = ParamSet(flat)
            tape, l_v, l_b, l_i, total = self.losses(net, pset=pset)
            backward(tape, total)
            comps = {
                "V": float(tape.val(l_v)),
                "B": float(tape.val(l_b)),
                "I": float(tape.val(l_i)),
            }
            metric = relative_l2_error(net.predict(self.volume), self._u_ref)
            return float(tape.val(total)), pset.grad.copy(), comps, metric

        return closure

    def on_step_end(self, flat) -> None:
        if self._last_residuals is not None:
            self.rba.update(self._last_residuals)

    def reference_field(self):
        return self._u_ref


class BurgersProblem:
    """1d viscous Burgers PINN on a full-batch space-time grid.

    u_t + u u_x - nu u_xx with nu = 1e-2 on [-1,1] x [0,1]; the initial
    condition u0(x) = -sin(pi x) is the standard benchmark choice (the
    grid endpoints fold the homogeneous boundary into the IC).
    """

    def __init__(self, nu: float = 1e-2, nx: int = 64, nt: int = 64,
                 gamma_v: float = 1.0, gamma_b: float = 1.0):
        self.nu = nu
        self.xs = np.linspace(-1.0, 1.0, nx)
        self.ts = np.linspace(0.0, 1.0, nt)
        gx, gt = np.meshgrid(self.xs, self.ts, indexing="ij")
        self.volume = np.column_stack([gx.ravel(), gt.ravel()])
        self.ic_points = np.column_stack([self.xs, np.zeros(nx)])
        self.ic_values = (-np.sin(math.pi * self.xs))[:, None]
        self.gamma_v = gamma_v
        self.gamma_b = gamma_b

    def residual_nodes(self, net, tape, pset):
        out_x, out_t = net.forward_tape_multi(
            tape, self.volume, pset=pset,
            seeds=[((1.0, 0.0), 2), ((0.0, 1.0), 1)],
        )
        advect = tape.record("mul", out_x.v, out_x.d1)
        res = tape.record(
            "sub",
            tape.record("add", out_t.d1, advect),
            tape.record("scale", out_x.d2, c=self.nu),
        )
        return res

    def make_closure(self, net: Network):
        def closure(flat):
            devectorize(net, flat)
            pset = ParamSet(flat)
            tape = Tape()
            res = self.residual_nodes(net, tape, pset)
            m = self.volume.shape[0]
            l_v = tape.record("scale", tape.record("sum", tape.record("mul", res, res)), c=1.0 / m)
            out_ic = net.forward_tape(tape, self.ic_points, pset=pset, order=0)
            l_b = _mse_nodes(tape, out_ic.v, self.ic_values)
            total = tape.record(
                "add",
                tape.record("scale", l_v, c=self.gamma_v),
                tape.record("scale", l_b, c=self.gamma_b),
            )
            backward(tape, total)
            comps = {"V": float(tape.val(l_v)), "B": float(tape.val(l_b))}
            val = float(tape.val(total))
            return val, pset.grad.copy(), comps, val

        return closure

    def residual_field(self, net: Network) -> np.ndarray:
        tape = Tape()
        res = self.residual_nodes(net, tape, None)
        return tape.val(res)[:, 0].reshape(self.xs.size, self.ts.size)

    def solution_field(self, net: Network) -> np.ndarray:
        return net.predict(self.volume)[:, 0].reshape(self.xs.size, self.ts.size)


class AllenCahnProblem:
    """Allen-Cahn PINN: u_t = -eps u_xx + 5u^3 - 5u is the displayed form;
    the trained residual is u_t - eps u_xx + 5u^3 - 5u with eps = 1e-4
    (the standard benchmark), both sign and eps configurable.

    IC u(x, 0) = x^2 cos(pi x) on 501 points; collocation points are drawn
    uniformly in [-1,1] x [0,1]; RBA weights the volume term.
    """

    def __init__(self, seed: int = 1234, n_collocation: int = 20000,
                 eps: float = 1e-4, gamma_v: float = 0.1, gamma_b: float = 1.0,
                 rba_mu: float = 1e-4, n_ic: int = 501, diffusion_sign: float = -1.0):
        rng = np.random.default_rng(seed)
        pts = rng.random((n_collocation, 2))
        self.volume = np.column_stack([2.0 * pts[:, 0] - 1.0, pts[:, 1]])
        ic_x = np.linspace(-1.0, 1.0, n_ic)
        self.ic_points = np.column_stack([ic_x, np.zeros(n_ic)])
        self.ic_values = (ic_x**2 * np.cos(math.pi * ic_x))[:, None]
        self.eps = eps
        self.gamma_v = gamma_v
        self.gamma_b = gamma_b
        self.diffusion_sign = diffusion_sign
        self.rba = RbaWeights(n_collocation, rba_mu)
        self._last_residuals: np.ndarray | None = None

    def residual_nodes(self, net, tape, pset, points=None):
        pts = self.volume if points is None else points
        out_x, out_t = net.forward_tape_multi(
            tape, pts, pset=pset,
            seeds=[((1.0, 0.0), 2), ((0.0, 1.0), 1)],
        )
        u = out_x.v
        cubic = tape.record("scale", tape.record("pow_int", u, k=3), c=5.0)
        linear = tape.record("scale", u, c=5.0)
        reaction = tape.record("sub", cubic, linear)
        diff = tape.record("scale", out_x.d2, c=self.diffusion_sign * self.eps)
        return tape.record("add", tape.record("add", out_t.d1, diff), reaction)

    def make_closure(self, net: Network):
        def closure(flat):
            devectorize(net, flat)
            pset = ParamSet(flat)
            tape = Tape()
            res = self.residual_nodes(net, tape, pset)
            lam = tape.const(self.rba.lam[:, None])
            m = self.volume.shape[0]
            weighted = tape.record("mul", lam, tape.record("mul", res, res))
            l_v = tape.record("scale", tape.record("sum", weighted), c=1.0 / m)
            out_ic = net.forward_tape(tape, self.ic_points, pset=pset, order=0)
            l_b = _mse_nodes(tape, out_ic.v, self.ic_values)
            total = tape.record(
                "add",
                tape.record("scale", l_v, c=self.gamma_v),
                tape.record("scale", l_b, c=self.gamma_b),
            )
            backward(tape, total)
            self._last_residuals = np.abs(tape.val(res))[:, 0]
            comps = {"V": float(tape.val(l_v)), "B": float(tape.val(l_b))}
            val = float(tape.val(total))
            return val, pset.grad.copy(), comps, val

        return closure

    def on_step_end(self, flat) -> None:
        if self._last_residuals is not None:
            self.rba.update(self._last_residuals)

    def grid(self, nx: int = 64, nt: int = 64):
        xs = np.linspace(-1.0, 1.0, nx)
        ts = np.linspace(0.0, 1.0, nt)
        gx, gt = np.meshgrid(xs, ts, indexing="ij")
        return xs, ts, np.column_stack([gx.ravel(), gt.ravel()])

    def residual_field(self, net: Network, nx: int = 64, nt: int = 64):
        xs, ts, pts = self.grid(nx, nt)
        tape = Tape()
        res = self.residual_nodes(net, tape, None, points=pts)
        return xs, ts, tape.val(res)[:, 0].reshape(nx, nt)

    def solution_field(self, net: Network, nx: int = 64, nt: int = 64):
        xs, ts, pts = self.grid(nx, nt)
        return xs, ts, net.predict(pts)[:, 0].reshape(nx, nt)
