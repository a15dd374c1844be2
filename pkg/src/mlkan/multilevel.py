"""Knot-refinement hierarchies and nested multilevel training.

A coarse spline space is contained in its dyadic refinement, so coarse
coefficients map to fine ones through a prolongation P with
g_coarse(x; u) = g_fine(x; P u) on the knot domain: refining a trained
network preserves both its outputs and its loss exactly.  The driver
trains level by level (coarse to fine), interpolating the solution as the
next level's initial guess.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb

import numpy as np

from .basis import KnotVector, build_cob, make_uniform_knots
from .linalg import banded_upper_solve_mat, matmul
from .model import KanLayer, MlpLayer, Network, init_weights, vectorize, devectorize
from .optim import AdamState, LbfgsState, LrSchedule, adam_step, lbfgs_epoch, lr_at, sgd_step

__all__ = [
    "Prolongation",
    "Hierarchy",
    "RunLog",
    "OptimizerConfig",
    "DivergenceError",
    "refine_knots",
    "dyadic_prolongation",
    "general_prolongation",
    "refine_network",
    "build_hierarchy",
    "nested_train",
    "dyadic_mask_constant",
    "network_flops_per_point",
]


@dataclass(frozen=True)
class Prolongation:
    """Linear coarse-to-fine coefficient map, u_fine = matrix @ u_coarse."""

    coarse: KnotVector
    fine: KnotVector
    matrix: np.ndarray  # (fine.dim, coarse.dim)
    kind: str
    mask_constant: float | None = None

    def apply(self, coeffs: np.ndarray) -> np.ndarray:
        """Map coefficient rows (..., coarse.dim) -> (..., fine.dim)."""
        return np.asarray(coeffs) @ self.matrix.T


def refine_knots(coarse: KnotVector) -> KnotVector:
    """Bisect every interval of a uniform grid (n -> 2n, same domain)."""
    if coarse.h is None:
        raise ValueError("dyadic refinement requires uniform knots")
    return make_uniform_knots(coarse.a, coarse.b, 2 * coarse.n, coarse.r)


@lru_cache(maxsize=None)
def dyadic_mask_constant(r: int) -> float:
    """Normalization of the two-scale mask, fixed by the nesting identity.

    Candidates 2**(1-r) and 2**(-r) are both checked against
    g_c(x; u) = g_f(x; P u) on a probe grid; the passing one is returned.
    """
    coarse = make_uniform_knots(0.0, 1.0, 4, r)
    fine = refine_knots(coarse)
    rng = np.random.default_rng(1234)
    u_c = rng.standard_normal(coarse.dim)
    xs = np.linspace(0.0, 1.0, 257)
    from .basis import bspline_values

    g_c = bspline_values(coarse, xs) @ u_c
    fine_table = bspline_values(fine, xs)
    best = None
    for cand in (2.0 ** (1 - r), 2.0 ** (-r)):
        p = _dyadic_matrix(coarse, fine, cand)
        err = float(np.max(np.abs(fine_table @ (p @ u_c) - g_c)))
        if err < 1e-10:
            best = cand
            break
    if best is None:
        raise AssertionError(f"no candidate mask constant satisfies nesting for r={r}")
    return best


def _dyadic_matrix(coarse: KnotVector, fine: KnotVector, const: float) -> np.ndarray:
    r = coarse.r
    p = np.zeros((fine.dim, coarse.dim))
    for ic in range(coarse.dim):
        for s in range(r + 1):
            jf = 2 * ic + s - (r - 1)
            if 0 <= jf < fine.dim:
                p[jf, ic] = const * comb(r, s)
    return p


def dyadic_prolongation(coarse: KnotVector) -> Prolongation:
    """Two-scale refinement on a uniform grid: mask c_r * binom(r, s)."""
    if coarse.h is None:
        raise ValueError("dyadic prolongation requires uniform knots; use general_prolongation")
    fine = refine_knots(coarse)
    const = dyadic_mask_constant(coarse.r)
    return Prolongation(coarse, fine, _dyadic_matrix(coarse, fine, const), "dyadic", const)


def general_prolongation(coarse: KnotVector, fine: KnotVector) -> Prolongation:
    """P from the two change-of-basis matrices and a knot-selection matrix.

    Every coarse knot inside [a, b] must appear in the fine set (tolerance
    1e-12 * h); exterior knots may be unmatched, which perturbs only
    boundary basis functions outside the domain.
    """
    if coarse.r != fine.r:
        raise ValueError("orders must match")
    tol = 1e-12 * max(
        float(np.min(np.diff(coarse.knots))), float(np.min(np.diff(fine.knots)))
    )
    selection = np.zeros((coarse.dim, fine.dim))
    for i in range(coarse.dim):
        t_i = coarse.knots[i]
        hits = np.where(np.abs(fine.knots[: fine.dim] - t_i) <= tol)[0]
        if hits.size:
            selection[i, hits[0]] = 1.0
        elif coarse.a - tol <= t_i <= coarse.b + tol:
            raise ValueError(f"coarse knot {t_i} missing from the fine knot set")
    a_coarse = build_cob(coarse)
    a_fine = build_cob(fine)
    upper = matmul(a_coarse.densify(), selection)  # A_T I, shape (Kc, Kf)
    # transpose into the coarse->fine orientation: P = (A_T I A_T'^{-1})^T
    mat = banded_upper_solve_mat(a_fine.inner, upper.T, transpose=True)
    return Prolongation(coarse, fine, mat, "general")


def refine_network(net: Network, kind: str = "dyadic"):
    """Dyadically refine every KAN layer; weights map through P slice-wise.

    ReLU-mode layers convert to the spline basis, prolong, and convert
    back.  Returns (fine_network, per-layer prolongations).
    """
    fine_layers = []
    prolongs = []
    for lay in net.layers:
        if isinstance(lay, MlpLayer):
            fine_layers.append(lay.copy())
            prolongs.append(None)
            continue
        if kind == "dyadic":
            p = dyadic_prolongation(lay.knots)
        elif kind == "general":
            p = general_prolongation(lay.knots, refine_knots(lay.knots))
        else:
            raise ValueError(f"unknown refinement kind {kind!r}")
        spline_w = lay.weights if lay.mode == "spline" else lay.to_spline_weights()
        mapped = p.apply(spline_w.reshape(-1, lay.knots.dim)).reshape(
            lay.Q, lay.P, p.fine.dim
        )
        fine = KanLayer(lay.P, lay.Q, p.fine, mapped, mode="spline")
        if lay.mode == "relu":
            fine = fine.converted("relu")
        fine_layers.append(fine)
        prolongs.append(p)
    return Network(fine_layers, net.normalizer, net.augment), prolongs


@dataclass
class Hierarchy:
    """Networks coarse to fine with the prolongations linking them."""

    networks: list[Network]
    prolongations: list[list]  # [level][layer], between consecutive levels
    schedule: list[int]

    @property
    def levels(self) -> int:
        return len(self.networks)


def build_hierarchy(coarse_net: Network, levels: int, schedule) -> Hierarchy:
    schedule = list(schedule)
    if len(schedule) != levels:
        raise ValueError("schedule length must equal the number of levels")
    if any(s < 0 for s in schedule):
        raise ValueError("schedule entries must be nonnegative")
    nets = [coarse_net]
    prolongs = []
    for _ in range(levels - 1):
        fine, p = refine_network(nets[-1])
        nets.append(fine)
        prolongs.append(p)
    return Hierarchy(nets, prolongs, schedule)


def _prolong_into(src: Network, dst: Network, prolongs) -> None:
    for lay_s, lay_d, p in zip(src.layers, dst.layers, prolongs):
        if isinstance(lay_s, MlpLayer):
            lay_d.weights[:] = lay_s.weights
            lay_d.bias[:] = lay_s.bias
            continue
        spline_w = lay_s.weights if lay_s.mode == "spline" else lay_s.to_spline_weights()
        mapped = p.apply(spline_w.reshape(-1, lay_s.knots.dim)).reshape(
            lay_d.Q, lay_d.P, p.fine.dim
        )
        if lay_d.mode == "relu":
            lay_d.weights[:] = KanLayer(lay_d.P, lay_d.Q, p.fine, mapped).to_relu_weights()
        else:
            lay_d.weights[:] = mapped


def network_flops_per_point(net: Network) -> float:
    """Fast-path cost model: sum over layers of P*Q*(n + r) per sample."""
    total = 0.0
    for lay in net.layers:
        if isinstance(lay, MlpLayer):
            total += lay.P * lay.Q
        else:
            total += lay.P * lay.Q * (lay.knots.n + lay.knots.r)
    return total


@dataclass
class OptimizerConfig:
    kind: str = "adam"  # adam | lbfgs | sgd
    schedule: LrSchedule = field(default_factory=LrSchedule)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    lbfgs_history: int = 10
    lbfgs_lr: float = 1.0
    lbfgs_max_iter: int = 20
    reset_state_per_level: bool = True


@dataclass
class RunLog:
    """Per-step records plus a summary of the finished (or aborted) run."""

    records: list = field(default_factory=list)  # dict per step
    summary: dict = field(default_factory=dict)

    def add(self, **kw) -> None:
        self.records.append(kw)

    def column(self, name):
        return [rec.get(name) for rec in self.records]


class DivergenceError(RuntimeError):
    def __init__(self, message, log: RunLog):
        super().__init__(message)
        self.log = log


def nested_train(hierarchy: Hierarchy, problem, opt: OptimizerConfig, seed: int,
                 init_scale: float = 0.1, callback=None) -> tuple[RunLog, Network]:
    """Run the nested multilevel loop: train, prolong, repeat, finest last.

    ``problem`` provides make_closure(net) -> fn(flat) -> (loss, grad,
    components, metric) and optionally on_step_end(flat) for attention
    weights.  Logs one record per optimizer step; level transitions record
    the relative loss jump, which proper nesting keeps at rounding level.
    """
    log = RunLog()
    log.summary["seed"] = seed
    log.summary["schedule"] = list(hierarchy.schedule)
    log.summary["param_counts"] = [net.n_params for net in hierarchy.networks]
    log.summary["transitions"] = []
    mask_constants = {
        lay.knots.r: dyadic_mask_constant(lay.knots.r)
        for lay in hierarchy.networks[0].layers
        if isinstance(lay, KanLayer)
    }
    log.summary["mask_constants"] = mask_constants

    init_weights(hierarchy.networks[0], seed, scale=init_scale)
    global_step = 0
    last_loss = None
    flat = vectorize(hierarchy.networks[0])

    for level, net in enumerate(hierarchy.networks):
        closure = problem.make_closure(net)
        if level > 0:
            before = last_loss
            _prolong_into(hierarchy.networks[level - 1], net, hierarchy.prolongations[level - 1])
            flat = vectorize(net)
            after = closure(flat)[0]
            jump = abs(after - before) / max(abs(before), 1e-300) if before is not None else 0.0
            log.summary["transitions"].append(
                {"level": level, "loss_before": before, "loss_after": after, "rel_jump": jump}
            )
            last_loss = after
        epochs = hierarchy.schedule[level]
        if epochs == 0:
            if last_loss is None:
                last_loss = closure(flat)[0]
            continue

        adam_state = AdamState(flat.size, opt.beta1, opt.beta2, opt.eps, opt.weight_decay)
        lbfgs_state = LbfgsState(opt.lbfgs_history, opt.lbfgs_lr)
        eval_cell: dict = {}

        def fg(x, _closure=closure, _cell=eval_cell):
            loss, grad, comps, metric = _closure(x)
            _cell["comps"], _cell["metric"] = comps, metric
            return loss, grad

        for step in range(epochs):
            lr = lr_at(opt.schedule, step)
            t0 = time.perf_counter()
            if opt.kind == "lbfgs":
                flat, loss = lbfgs_epoch(lbfgs_state, flat, fg,
                                         max_iter=opt.lbfgs_max_iter)
                lr = opt.lbfgs_lr
                comps, metric = eval_cell["comps"], eval_cell["metric"]
            else:
                loss, grad, comps, metric = closure(flat)
                if opt.kind == "adam":
                    flat = adam_step(adam_state, flat, grad, lr)
                else:
                    flat = sgd_step(flat, grad, lr)
            wall_ms = (time.perf_counter() - t0) * 1e3
            if not np.isfinite(loss):
                devectorize(net, flat)
                log.summary["aborted"] = {"level": level, "step": step}
                raise DivergenceError(f"loss diverged at level {level} step {step}", log)
            last_loss = loss
            log.add(step=global_step, level=level, loss=float(loss), metric=float(metric),
                    lr=float(lr), wall_ms=wall_ms,
                    **{f"loss_{k}": float(v) for k, v in comps.items()})
            if hasattr(problem, "on_step_end"):
                problem.on_step_end(flat)
            if callback is not None:
                callback(level, global_step, net, flat)
            global_step += 1
        devectorize(net, flat)
        if opt.kind != "lbfgs":
            # the recorded losses are pre-update; refresh for the
            # level-transition continuity check
            last_loss = closure(flat)[0]

    final = hierarchy.networks[-1]
    devectorize(final, flat)
    log.summary["final_loss"] = float(last_loss) if last_loss is not None else None
    if log.records:
        log.summary["final_metric"] = log.records[-1]["metric"]
    log.summary["flops_per_point_per_level"] = [
        network_flops_per_point(n) for n in hierarchy.networks
    ]
    log.summary["total_flops_per_point"] = float(
        sum(network_flops_per_point(n) * e for n, e in zip(hierarchy.networks, hierarchy.schedule))
    )
    return log, final
