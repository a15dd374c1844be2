"""Optimizers, schedules, attention weights, and basis-aware update rules.

``table1_update`` realizes the preconditioned gradient-descent iterations
that arise from choosing the geometry, the gradient basis, and the iterate
space independently in either the spline (u) or ReLU (w) weight basis;
``GlobalCob`` provides the block-diagonal change of basis over
(layer, output, input) blocks that those rules apply.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import banded_matmat, banded_upper_solve_mat
from .model import KanLayer, Network

__all__ = [
    "sgd_step",
    "AdamState",
    "adam_step",
    "LbfgsState",
    "lbfgs_step",
    "LrSchedule",
    "lr_at",
    "RbaWeights",
    "UpdateRule",
    "GlobalCob",
    "table1_update",
]


def _check_finite(grad: np.ndarray, who: str) -> None:
    if not np.all(np.isfinite(grad)):
        bad = int(np.sum(~np.isfinite(grad)))
        raise FloatingPointError(f"{who}: gradient has {bad} non-finite entries")


def sgd_step(params: np.ndarray, grad: np.ndarray, eta: float) -> np.ndarray:
    if params.shape != grad.shape:
        raise ValueError("parameter/gradient shape mismatch")
    _check_finite(grad, "sgd_step")
    return params - eta * grad


class AdamState:
    """First/second moment accumulators plus decoupled weight decay."""

    def __init__(self, size: int, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, weight_decay: float = 0.0):
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay


def adam_step(state: AdamState, params: np.ndarray, grad: np.ndarray, eta: float) -> np.ndarray:
    """Bias-corrected Adam; decay shrinks params before the Adam delta."""
    _check_finite(grad, "adam_step")
    if state.weight_decay:
        params = params * (1.0 - eta * state.weight_decay)
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    mhat = state.m / (1.0 - state.beta1**state.t)
    vhat = state.v / (1.0 - state.beta2**state.t)
    return params - eta * mhat / (np.sqrt(vhat) + state.eps)


class LbfgsState:
    """s/y pair history for the two-loop recursion."""

    def __init__(self, capacity: int = 10, lr: float = 1.0,
                 c1: float = 1e-4, c2: float = 0.9, max_ls: int = 25):
        self.history: list[tuple[np.ndarray, np.ndarray, float]] = []
        self.capacity = capacity
        self.lr = lr
        self.c1 = c1
        self.c2 = c2
        self.max_ls = max_ls
        self.cached: tuple[float, np.ndarray] | None = None
        self.fallbacks = 0


def _two_loop(state: LbfgsState, grad: np.ndarray) -> np.ndarray:
    q = grad.copy()
    alphas = []
    for s, y, rho in reversed(state.history):
        a = rho * float(s @ q)
        q -= a * y
        alphas.append(a)
    if state.history:
        s, y, _ = state.history[-1]
        gamma = float(s @ y) / float(y @ y)
    else:
        gamma = 1.0
    r = gamma * q
    for (s, y, rho), a in zip(state.history, reversed(alphas)):
        b = rho * float(y @ r)
        r += (a - b) * s
    return r


def lbfgs_step(state: LbfgsState, params: np.ndarray, loss_and_grad):
    """One L-BFGS iteration with a strong Wolfe line search.

    ``loss_and_grad(x) -> (f, g)`` re-evaluates at trial points.  On
    line-search failure the step falls back to plain gradient descent with
    eta = 1e-3 and counts the event in ``state.fallbacks``.
    Returns (new_params, loss_at_new_params).
    """
    if state.cached is None:
        f0, g0 = loss_and_grad(params)
    else:
        f0, g0 = state.cached
    _check_finite(g0, "lbfgs_step")
    d = -_two_loop(state, g0)
    dphi0 = float(g0 @ d)
    if dphi0 >= 0.0:  # not a descent direction; restart from steepest descent
        d = -g0
        dphi0 = float(g0 @ d)
        state.history.clear()

    def phi(alpha):
        f, g = loss_and_grad(params + alpha * d)
        return f, float(g @ d), g

    alpha, f1, g1 = _strong_wolfe(phi, f0, dphi0, state.lr, state.c1, state.c2, state.max_ls)
    if alpha is None:
        state.fallbacks += 1
        new_params = params - 1e-3 * g0
        f1, g1 = loss_and_grad(new_params)
    else:
        new_params = params + alpha * d
    s = new_params - params
    y = g1 - g0
    sy = float(s @ y)
    if sy > 1e-10:
        state.history.append((s, y, 1.0 / sy))
        if len(state.history) > state.capacity:
            state.history.pop(0)
    state.cached = (f1, g1)
    return new_params, f1


def lbfgs_epoch(state: LbfgsState, params: np.ndarray, loss_and_grad,
                max_iter: int = 20, tol_grad: float = 1e-7, tol_change: float = 1e-9):
    """One scheduled epoch: up to ``max_iter`` L-BFGS iterations with the
    usual early stops on gradient norm and loss stagnation."""
    loss = None
    for _ in range(max_iter):
        prev = loss
        params, loss = lbfgs_step(state, params, loss_and_grad)
        _, g = state.cached
        if float(np.max(np.abs(g))) <= tol_grad:
            break
        if prev is not None and abs(prev - loss) <= tol_change:
            break
    return params, loss


def _strong_wolfe(phi, f0, dphi0, alpha0, c1, c2, max_iter):
    """Bracket + zoom line search (returns (alpha, f, g) or (None, ..))."""
    alpha_prev, f_prev = 0.0, f0
    alpha = alpha0
    f_lo, g_lo = None, None
    lo = hi = None
    for i in range(max_iter):
        f, dphi, g = phi(alpha)
        if f > f0 + c1 * alpha * dphi0 or (i > 0 and f >= f_prev):
            lo, hi, f_lo = alpha_prev, alpha, f_prev
            break
        if abs(dphi) <= -c2 * dphi0:
            return alpha, f, g
        if dphi >= 0.0:
            lo, hi, f_lo = alpha, alpha_prev, f
            break
        alpha_prev, f_prev = alpha, f
        alpha *= 2.0
    else:
        return None, None, None
    # zoom
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        f, dphi, g = phi(mid)
        if f > f0 + c1 * mid * dphi0 or f >= f_lo:
            hi = mid
        else:
            if abs(dphi) <= -c2 * dphi0:
                return mid, f, g
            if dphi * (hi - lo) >= 0.0:
                hi = lo
            lo, f_lo = mid, f
        if abs(hi - lo) < 1e-16:
            break
    return None, None, None


@dataclass(frozen=True)
class LrSchedule:
    """constant | linear_ramp (eta0 -> eta over ramp_steps, re-triggered per
    level) | exp_cyclic (decaying envelope with a sawtooth restart)."""

    kind: str = "constant"
    eta: float = 1e-3
    eta0: float = 1e-4
    ramp_steps: int = 10
    cycle: int = 100
    gamma: float = 0.9995

    def __post_init__(self):
        if self.kind not in ("constant", "linear_ramp", "exp_cyclic"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.eta <= 0 or self.eta0 <= 0:
            raise ValueError("learning rates must be positive")


def lr_at(schedule: LrSchedule, step: int) -> float:
    """Rate at a (level-local) step index."""
    if step < 0:
        raise ValueError("step must be nonnegative")
    if schedule.kind == "constant":
        return schedule.eta
    if schedule.kind == "linear_ramp":
        if step >= schedule.ramp_steps:
            return schedule.eta
        frac = step / schedule.ramp_steps
        return schedule.eta0 + (schedule.eta - schedule.eta0) * frac
    envelope = schedule.eta * schedule.gamma**step
    phase = (step % schedule.cycle) / schedule.cycle
    return envelope * (1.0 - 0.9 * phase)


class RbaWeights:
    """Residual-based attention: lam_i <- (1-mu) lam_i + mu e_i / max_j e_j."""

    def __init__(self, size: int, mu: float):
        self.lam = np.ones(size)
        self.mu = mu

    def update(self, residuals: np.ndarray) -> None:
        e = np.abs(np.asarray(residuals, dtype=np.float64))
        if e.shape != self.lam.shape:
            raise ValueError("residual count does not match weight count")
        peak = float(np.max(e))
        if peak == 0.0:
            return
        self.lam = (1.0 - self.mu) * self.lam + self.mu * (e / peak)


@dataclass(frozen=True)
class UpdateRule:
    """One of the eight (geometry, gradient basis, iterate space) choices."""

    geometry: str
    gradient: str
    space: str

    def __post_init__(self):
        for f in (self.geometry, self.gradient, self.space):
            if f not in ("u", "w"):
                raise ValueError("rule fields must be 'u' or 'w'")


class GlobalCob:
    """Block-diagonal A over the canonical weight vector of a KAN network.

    Blocks are the per-layer A^[r], one per (layer, output, input) slice;
    applications stay banded throughout.
    """

    def __init__(self, net: Network):
        self.blocks = []
        offset = 0
        for lay in net.layers:
            if not isinstance(lay, KanLayer):
                raise ValueError("GlobalCob requires a pure KAN network")
            self.blocks.append((offset, lay.Q * lay.P, lay.knots.dim, lay.cob))
            offset += lay.size
        self.size = offset

    def apply(self, vec: np.ndarray, kind: str) -> np.ndarray:
        """kind in {'A', 'AT', 'Ainv', 'AinvT'} applied blockwise."""
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.size,):
            raise ValueError("vector length does not match the network")
        out = np.empty_like(vec)
        for offset, slices, dim, cob in self.blocks:
            seg = vec[offset : offset + slices * dim].reshape(slices, dim).T
            if kind == "A":
                res = banded_matmat(cob.inner, seg)
            elif kind == "AT":
                res = banded_matmat(cob.inner, seg, transpose=True)
            elif kind == "Ainv":
                res = banded_upper_solve_mat(cob.inner, seg)
            elif kind == "AinvT":
                res = banded_upper_solve_mat(cob.inner, seg, transpose=True)
            else:
                raise ValueError(f"unknown application kind {kind!r}")
            out[offset : offset + slices * dim] = res.T.ravel()
        return out

    def spline_to_relu(self, u: np.ndarray) -> np.ndarray:
        """w = A^T u on canonical flat weights."""
        return self.apply(u, "AT")

    def relu_to_spline(self, w: np.ndarray) -> np.ndarray:
        return self.apply(w, "AinvT")


def table1_update(rule: UpdateRule, params: np.ndarray, grad: np.ndarray,
                  eta: float, cob: GlobalCob, diag: np.ndarray | None = None) -> np.ndarray:
    """Apply one preconditioned update; ``grad`` is the gradient taken in
    ``rule.space``'s basis and ``diag`` the optional diagonal preconditioner
    associated with ``rule.gradient``'s basis."""
    _check_finite(grad, "table1_update")

    def dap(v):
        return v * diag if diag is not None else v

    key = (rule.geometry, rule.gradient, rule.space)
    if key == ("w", "w", "w"):
        delta = dap(grad)
    elif key == ("w", "w", "u"):
        delta = cob.apply(dap(cob.apply(grad, "Ainv")), "AinvT")
    elif key == ("w", "u", "w"):
        delta = dap(cob.apply(grad, "A"))
    elif key == ("w", "u", "u"):
        delta = cob.apply(dap(grad), "AinvT")
    elif key == ("u", "u", "w"):
        delta = cob.apply(dap(cob.apply(grad, "A")), "AT")
    elif key == ("u", "u", "u"):
        delta = dap(grad)
    elif key == ("u", "w", "w"):
        delta = cob.apply(dap(grad), "AT")
    elif key == ("u", "w", "u"):
        delta = dap(cob.apply(grad, "Ainv"))
    else:  # pragma: no cover
        raise ValueError(f"unsupported rule {key}")
    return params - eta * delta
