"""KAN layers in spline/ReLU parameterizations, MLP baseline, networks.

A KAN layer holds a weight 3-tensor W[q][p][i] over (output, input, knot)
and one knot vector shared by its edges.  In spline mode the trainable
weights multiply B-spline values; in ReLU mode they multiply truncated
powers.  ``to_relu_weights``/``to_spline_weights`` move between the two
through the banded change of basis, and both modes produce identical
outputs on the knot domain.

The fast forward path evaluates truncated powers and applies the banded
change-of-basis matrix (O(n r) per input); ``path="coxdeboor"`` runs the
classical recursion on the tape instead and serves as the reference for
values and for the cost benchmark.
"""

from __future__ import annotations

import json

import numpy as np

from . import autodiff as ad
from .autodiff import Jet, ParamSet, Tape
from .basis import KnotVector, build_cob, make_uniform_knots

__all__ = [
    "KanLayer",
    "MlpLayer",
    "Network",
    "make_kan_network",
    "make_mlp_network",
    "init_weights",
    "convert_network",
    "param_count",
    "vectorize",
    "devectorize",
    "save_checkpoint",
    "load_checkpoint",
]

SPLINE = "spline"
RELU = "relu"


class MultiJet:
    """Value node plus (d1, d2) node pairs for several seed directions."""

    __slots__ = ("v", "seeds")

    def __init__(self, v: int, seeds: list):
        self.v = v
        self.seeds = seeds


class KanLayer:
    """One KAN layer: out_q = sum_p sum_i W[q,p,i] * basis_i(x_p)."""

    def __init__(self, in_width: int, out_width: int, knots: KnotVector,
                 weights: np.ndarray | None = None, mode: str = SPLINE):
        if mode not in (SPLINE, RELU):
            raise ValueError(f"unknown basis mode {mode!r}")
        self.P = in_width
        self.Q = out_width
        self.knots = knots
        self.mode = mode
        k = knots.dim
        if weights is None:
            weights = np.zeros((out_width, in_width, k))
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (out_width, in_width, k):
            raise ValueError(f"weight tensor must be {(out_width, in_width, k)}")
        self.weights = weights
        self.cob = build_cob(knots)
        self._kernel_cache: dict | None = None

    @property
    def size(self) -> int:
        return self.weights.size

    @property
    def domain(self) -> tuple[float, float]:
        return self.knots.a, self.knots.b

    def to_relu_weights(self) -> np.ndarray:
        """W = W_spline x_3 A^T, slice-by-slice over (q, p)."""
        flat = self.weights.reshape(-1, self.knots.dim).T
        return self.cob.apply_t(flat).T.reshape(self.weights.shape)

    def to_spline_weights(self) -> np.ndarray:
        """Inverse map: solve A^T w_spline = w per (q, p) slice."""
        flat = self.weights.reshape(-1, self.knots.dim).T
        return self.cob.solve_t(flat).T.reshape(self.weights.shape)

    def converted(self, mode: str) -> "KanLayer":
        """Copy of this layer re-parameterized in the requested basis."""
        if mode == self.mode:
            w = self.weights.copy()
        elif mode == RELU:
            w = self.to_relu_weights()
        else:
            w = self.to_spline_weights()
        return KanLayer(self.P, self.Q, self.knots, w, mode)

    def copy(self) -> "KanLayer":
        return KanLayer(self.P, self.Q, self.knots, self.weights.copy(), self.mode)

    def kernel_args(self) -> dict:
        """Constant arguments of the fused basis-table op for this layer.

        ReLU mode uses an identity "band" so the same kernel serves both
        parameterizations.
        """
        if self._kernel_cache is None:
            k = self.knots
            if self.mode == SPLINE:
                diag_list = self.cob.inner.diagonals
            else:
                diag_list = [np.ones(k.dim)]
            # row-major (column, diagonal) layout keeps the kernel's inner
            # loop on contiguous memory
            diags = np.zeros((k.dim, len(diag_list)))
            for d, diag in enumerate(diag_list):
                diags[: k.dim - d, d] = diag
            self._kernel_cache = {
                "knots": np.ascontiguousarray(k.knots[: k.dim]),
                "diags": diags,
                "p": k.r - 1,
                "h": k.h if k.h is not None else 0.0,
                "compact": self.mode == SPLINE and k.h is not None,
            }
        return self._kernel_cache


class MlpLayer:
    """Dense layer x -> act(W x + b)."""

    def __init__(self, in_width: int, out_width: int, weights=None, bias=None,
                 activation: str = "tanh"):
        if activation not in ("tanh", "relu", "none"):
            raise ValueError(f"unknown activation {activation!r}")
        self.P = in_width
        self.Q = out_width
        self.weights = (np.zeros((out_width, in_width)) if weights is None
                        else np.asarray(weights, dtype=np.float64))
        self.bias = np.zeros(out_width) if bias is None else np.asarray(bias, dtype=np.float64)
        if self.weights.shape != (out_width, in_width) or self.bias.shape != (out_width,):
            raise ValueError("inconsistent MLP layer shapes")
        self.activation = activation

    @property
    def size(self) -> int:
        return self.weights.size + self.bias.size

    def copy(self) -> "MlpLayer":
        return MlpLayer(self.P, self.Q, self.weights.copy(), self.bias.copy(), self.activation)


class Network:
    """Layer stack with a normalization policy mapping activations into
    each layer's knot domain.

    normalizer:
      * "affine"  - clip into the knot interval (inputs are expected to
                    already live there); clipping is constant in derivatives
      * "sigmoid" - squash through a sigmoid rescaled onto the knot interval
      * "none"    - out-of-domain inputs raise
    augment: optional "abs0" appends |x_0| as an extra input channel
    (level-set field for interface problems).
    """

    def __init__(self, layers, normalizer: str = "affine", augment: str | None = None):
        if normalizer not in ("affine", "sigmoid", "none"):
            raise ValueError(f"unknown normalizer {normalizer!r}")
        if augment not in (None, "abs0"):
            raise ValueError(f"unknown augmentation {augment!r}")
        widths = [layers[0].P] + [lay.Q for lay in layers]
        for lay, w_in in zip(layers, widths[:-1]):
            if lay.P != w_in:
                raise ValueError("consecutive layer widths do not match")
        self.layers = list(layers)
        self.normalizer = normalizer
        self.augment = augment
        self.widths = widths
        self._offsets = np.cumsum([0] + [lay.size for lay in layers])

    # -- parameter bookkeeping ------------------------------------------------

    @property
    def n_params(self) -> int:
        return int(self._offsets[-1])

    def layer_offset(self, idx: int) -> int:
        return int(self._offsets[idx])

    def get_flat(self) -> np.ndarray:
        """Weights in canonical order: layer, output, input, then knot."""
        parts = []
        for lay in self.layers:
            parts.append(lay.weights.ravel())
            if isinstance(lay, MlpLayer):
                parts.append(lay.bias.ravel())
        return np.concatenate(parts) if parts else np.zeros(0)

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.n_params,):
            raise ValueError("flat vector has wrong length")
        for idx, lay in enumerate(self.layers):
            off = self.layer_offset(idx)
            if isinstance(lay, MlpLayer):
                wsize = lay.weights.size
                lay.weights[:] = flat[off : off + wsize].reshape(lay.weights.shape)
                lay.bias[:] = flat[off + wsize : off + lay.size]
            else:
                lay.weights[:] = flat[off : off + lay.size].reshape(lay.weights.shape)

    def copy(self) -> "Network":
        return Network([lay.copy() for lay in self.layers], self.normalizer, self.augment)

    # -- evaluation -----------------------------------------------------------

    def _prepare_inputs(self, x, seeds):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        if x.shape[1] + (1 if self.augment else 0) != self.widths[0]:
            raise ValueError(
                f"input dimension {x.shape[1]} does not match network width {self.widths[0]}"
            )
        seed_arrs = []
        for seed, order in seeds:
            arr = np.broadcast_to(np.asarray(seed, dtype=np.float64), x.shape).copy()
            seed_arrs.append((arr, order))
        if self.augment == "abs0":
            sign = np.sign(x[:, :1])
            x = np.concatenate([x, np.abs(x[:, :1])], axis=1)
            seed_arrs = [
                (np.concatenate([arr, sign * arr[:, :1]], axis=1), order)
                for arr, order in seed_arrs
            ]
        return x, seed_arrs

    def forward_tape(self, tape: Tape, x, pset: ParamSet | None = None,
                     seed=None, order: int = 2, path: str = "fast") -> Jet:
        """Record a forward pass; returns the output jet of shape (m, Q_last).

        With ``pset`` the layer weights become trainable leaves bound to it;
        otherwise they enter as constants.  ``seed`` is a direction (per
        input or per point) activating jet propagation up to ``order``.
        """
        seeds = [] if seed is None or order == 0 else [(seed, order)]
        outs = self.forward_tape_multi(tape, x, pset=pset, seeds=seeds, path=path)
        return outs[0]

    def forward_tape_multi(self, tape: Tape, x, pset: ParamSet | None = None,
                           seeds=(), path: str = "fast") -> list[Jet]:
        """Forward pass carrying several seed directions at once.

        ``seeds`` is a list of (direction, order) pairs; the value pass and
        the basis derivative tables are shared across directions, so adding
        a seed costs only its chain-rule products.  Returns one Jet per
        seed (a single value-only Jet when ``seeds`` is empty).
        """
        x, seed_arrs = self._prepare_inputs(x, list(seeds))
        channels = []
        for p in range(x.shape[1]):
            v = tape.const(x[:, p : p + 1])
            per_seed = []
            for arr, order in seed_arrs:
                d1 = tape.const(arr[:, p : p + 1])
                d2 = tape.const(np.zeros((x.shape[0], 1))) if order >= 2 else None
                per_seed.append((d1, d2))
            channels.append(MultiJet(v, per_seed))
        out = self._forward_channels(tape, channels, pset, start_layer=0, path=path)
        if not seed_arrs:
            return [Jet(out.v)]
        return [Jet(out.v, d1, d2) for d1, d2 in out.seeds]

    def forward_from_channels(self, tape: Tape, channels: list[Jet],
                              pset: ParamSet | None = None, start_layer: int = 0,
                              path: str = "fast") -> Jet:
        """Continue a forward pass from single-seed per-channel jets."""
        multis = [MultiJet(c.v, [(c.d1, c.d2)] if c.d1 is not None else []) for c in channels]
        out = self._forward_channels(tape, multis, pset, start_layer, path)
        if out.seeds:
            return Jet(out.v, out.seeds[0][0], out.seeds[0][1])
        return Jet(out.v)

    def _forward_channels(self, tape: Tape, channels: list["MultiJet"],
                          pset, start_layer: int, path: str) -> "MultiJet":
        out = None
        for idx in range(start_layer, len(self.layers)):
            lay = self.layers[idx]
            channels = self._normalize(tape, channels, lay)
            if isinstance(lay, MlpLayer):
                out = self._mlp_forward(tape, lay, idx, channels, pset)
            else:
                out = self._kan_forward(tape, lay, idx, channels, pset, path)
            if idx < len(self.layers) - 1:
                channels = [
                    MultiJet(
                        tape.record("col", out.v, j=q),
                        [
                            (
                                tape.record("col", d1, j=q) if d1 is not None else None,
                                tape.record("col", d2, j=q) if d2 is not None else None,
                            )
                            for d1, d2 in out.seeds
                        ],
                    )
                    for q in range(lay.Q)
                ]
        return out

    def first_layer_basis_tables(self, x, seed=None, order: int = 2):
        """Constant basis jet tables for the first (KAN) layer.

        Training inputs never change, so the per-channel basis values and
        their directional derivatives are constants; closures precompute
        them once and contract against the weight leaf each step.  Returns
        a list over input channels of (B, B1, B2) arrays (derivatives None
        when not requested).
        """
        lay = self.layers[0]
        if isinstance(lay, MlpLayer):
            raise ValueError("first layer is not a KAN layer")
        x, seed_arrs = self._prepare_inputs(x, [] if seed is None else [(seed, order)])
        seed_arr = seed_arrs[0][0] if seed_arrs else None
        k = lay.knots
        a, b = lay.domain
        p_exp = k.r - 1
        tables = []
        for p in range(x.shape[1]):
            col = x[:, p]
            dseed = seed_arr[:, p] if seed_arr is not None else None
            if self.normalizer == "affine":
                z = np.clip(col, a, b)
                dz = None if dseed is None else dseed * ((col >= a) & (col <= b))
                d2z = None if dseed is None else np.zeros_like(col)
            elif self.normalizer == "sigmoid":
                sig = 1.0 / (1.0 + np.exp(-col))
                z = a + (b - a) * sig
                s1 = (b - a) * sig * (1.0 - sig)
                dz = None if dseed is None else s1 * dseed
                d2z = None if dseed is None else s1 * (1.0 - 2.0 * sig) * dseed**2
            else:
                if np.any(col < a) or np.any(col > b):
                    raise ValueError("input outside the knot domain")
                z = col
                dz = dseed
                d2z = None if dseed is None else np.zeros_like(col)
            u = z[:, None] - k.knots[None, : k.dim]
            from .autodiff import _relu_pow_value

            vals = _relu_pow_value(u, p_exp)
            b1 = b2 = None
            if order >= 1 and dz is not None:
                f1 = p_exp * _relu_pow_value(u, p_exp - 1) if p_exp >= 1 else np.zeros_like(u)
                b1 = f1 * dz[:, None]
                if order >= 2:
                    f2 = (
                        p_exp * (p_exp - 1) * _relu_pow_value(u, p_exp - 2)
                        if p_exp >= 2
                        else np.zeros_like(u)
                    )
                    b2 = f2 * dz[:, None] ** 2 + f1 * d2z[:, None]
            if lay.mode == SPLINE:
                from .autodiff import _banded_apply

                diag = lay.cob.inner.diagonals
                vals = _banded_apply(vals, diag, False)
                if b1 is not None:
                    b1 = _banded_apply(b1, diag, False)
                if b2 is not None:
                    b2 = _banded_apply(b2, diag, False)
            tables.append((vals, b1, b2))
        return tables

    def contract_first_layer(self, tape: Tape, tables, pset: ParamSet | None = None) -> Jet:
        """Contract precomputed first-layer tables; returns the layer-0 jet."""
        lay = self.layers[0]
        w_node = self._weight_node(tape, lay, 0, pset)
        jets = [
            Jet(
                tape.const(vals),
                tape.const(b1) if b1 is not None else None,
                tape.const(b2) if b2 is not None else None,
            )
            for vals, b1, b2 in tables
        ]
        return ad.jet_contract(tape, w_node, jets)

    def _normalize(self, tape, channels, lay):
        if isinstance(lay, MlpLayer):
            return channels
        a, b = lay.domain
        if self.normalizer == "affine":
            out = []
            for c in channels:
                x = tape.val(c.v)
                v = tape.record("clip", c.v, lo=a, hi=b)
                if not c.seeds:
                    out.append(MultiJet(v, []))
                    continue
                mask = tape.const(((x >= a) & (x <= b)).astype(np.float64))
                seeds = [
                    (
                        tape.record("mul", mask, d1) if d1 is not None else None,
                        tape.record("mul", mask, d2) if d2 is not None else None,
                    )
                    for d1, d2 in c.seeds
                ]
                out.append(MultiJet(v, seeds))
            return out
        if self.normalizer == "sigmoid":
            out = []
            for c in channels:
                s = tape.record("sigmoid", c.v)
                v = tape.record("add", tape.record("scale", s, c=b - a), tape.const(a))
                if not c.seeds:
                    out.append(MultiJet(v, []))
                    continue
                one = tape.const(1.0)
                f1 = tape.record(
                    "scale", tape.record("mul", s, tape.record("sub", one, s)), c=b - a
                )
                f2 = tape.record(
                    "mul", f1, tape.record("sub", one, tape.record("scale", s, c=2.0))
                )
                seeds = []
                for d1, d2 in c.seeds:
                    nd1 = tape.record("mul", f1, d1) if d1 is not None else None
                    nd2 = None
                    if d2 is not None:
                        curv = tape.record("mul", f2, tape.record("mul", d1, d1))
                        nd2 = tape.record("add", curv, tape.record("mul", f1, d2))
                    seeds.append((nd1, nd2))
                out.append(MultiJet(v, seeds))
            return out
        for c in channels:
            vals = tape.val(c.v)
            if np.any(vals < a) or np.any(vals > b):
                raise ValueError("input outside the knot domain and no normalizer configured")
        return channels

    def _weight_node(self, tape, lay, idx, pset):
        if pset is None:
            return tape.const(lay.weights)
        return tape.param(pset, self.layer_offset(idx), lay.weights.shape)

    def _kan_forward(self, tape, lay, idx, channels, pset, path):
        w_node = self._weight_node(tape, lay, idx, pset)
        if path == "coxdeboor":
            if lay.mode != SPLINE:
                raise ValueError("coxdeboor path applies to spline-mode layers")
            if any(c.seeds for c in channels):
                raise ValueError("coxdeboor path does not support jets")
            v = tape.record(
                "kan_contract", w_node,
                *[_coxdeboor_nodes(tape, lay.knots, c.v) for c in channels],
            )
            return MultiJet(v, [])
        if path != "fast":
            raise ValueError(f"unknown forward path {path!r}")
        kern = lay.kernel_args()
        bundles = []
        for c in channels:
            kmax = 0
            for d1, d2 in c.seeds:
                if d2 is not None:
                    kmax = 2
                elif d1 is not None and kmax == 0:
                    kmax = 1
            d0 = tape.record("basis_table", c.v, k=0, **kern)
            t1 = tape.record("basis_table", c.v, k=1, **kern) if kmax >= 1 else None
            t2 = tape.record("basis_table", c.v, k=2, **kern) if kmax >= 2 else None
            seeds = []
            for d1, d2 in c.seeds:
                b1 = tape.record("mul", t1, d1) if d1 is not None else None
                b2 = None
                if d2 is not None:
                    curv = tape.record("mul", t2, tape.record("mul", d1, d1))
                    b2 = tape.record("add", curv, tape.record("mul", t1, d2))
                seeds.append((b1, b2))
            bundles.append(MultiJet(d0, seeds))
        v = tape.record("kan_contract", w_node, *[b.v for b in bundles])
        out_seeds = []
        for si in range(len(channels[0].seeds)):
            d1s = [b.seeds[si][0] for b in bundles]
            d2s = [b.seeds[si][1] for b in bundles]
            nd1 = tape.record("kan_contract", w_node, *d1s) if d1s[0] is not None else None
            nd2 = tape.record("kan_contract", w_node, *d2s) if d2s[0] is not None else None
            out_seeds.append((nd1, nd2))
        return MultiJet(v, out_seeds)

    def _mlp_forward(self, tape, lay, idx, channels, pset):
        off = self.layer_offset(idx)
        if pset is None:
            w_node = tape.const(lay.weights)
            b_node = tape.const(lay.bias)
        else:
            w_node = tape.param(pset, off, lay.weights.shape)
            b_node = tape.param(pset, off + lay.weights.size, lay.bias.shape)

        def lin(components):
            x = components[0] if len(components) == 1 else tape.record("concat", *components)
            return tape.record("matw", x, w_node)

        z_v = tape.record("add", lin([c.v for c in channels]), b_node)
        seeds = []
        for si in range(len(channels[0].seeds)):
            d1 = lin([c.seeds[si][0] for c in channels])
            d2s = [c.seeds[si][1] for c in channels]
            d2 = lin(d2s) if d2s[0] is not None else None
            seeds.append((d1, d2))
        if lay.activation == "none":
            return MultiJet(z_v, seeds)
        if lay.activation == "tanh":
            v = tape.record("tanh", z_v)
            if not seeds:
                return MultiJet(v, [])
            one = tape.const(1.0)
            f1 = tape.record("sub", one, tape.record("mul", v, v))
            f2 = tape.record("scale", tape.record("mul", v, f1), c=-2.0)
        else:  # relu
            v = tape.record("max0", z_v)
            if not seeds:
                return MultiJet(v, [])
            f1 = tape.const((tape.val(z_v) >= 0.0).astype(np.float64))
            f2 = tape.const(0.0)
        out_seeds = []
        for d1, d2 in seeds:
            nd1 = tape.record("mul", f1, d1)
            nd2 = None
            if d2 is not None:
                curv = tape.record("mul", f2, tape.record("mul", d1, d1))
                nd2 = tape.record("add", curv, tape.record("mul", f1, d2))
            out_seeds.append((nd1, nd2))
        return MultiJet(v, out_seeds)

    def predict(self, x) -> np.ndarray:
        tape = Tape()
        out = self.forward_tape(tape, x, order=0)
        return tape.val(out.v)

    def predict_jet(self, x, seed, order: int = 2):
        """(u, du, d2u) along the seed direction, as numpy arrays."""
        tape = Tape()
        out = self.forward_tape(tape, x, seed=seed, order=order)
        vals = [tape.val(out.v)]
        vals.append(tape.val(out.d1) if out.d1 is not None else None)
        vals.append(tape.val(out.d2) if out.d2 is not None else None)
        return tuple(vals)


def _coxdeboor_nodes(tape: Tape, k: KnotVector, x_node: int) -> int:
    """Record the Cox-de Boor recursion; returns a (m, dim) basis-value node."""
    t = k.knots
    c = t.size - 1
    s_left = tape.record("relu_pow", tape.record("sub", x_node, tape.const(t[:-1])), p=0)
    s_right = tape.record("relu_pow", tape.record("sub", x_node, tape.const(t[1:])), p=0)
    vals = tape.record("sub", s_left, s_right)
    for order in range(2, k.r + 1):
        c -= 1
        lo = t[:c]
        mid_l = t[order - 1 : order - 1 + c]
        mid_r = t[1 : 1 + c]
        hi = t[order : order + c]
        left = tape.record(
            "mul", tape.record("sub", x_node, tape.const(lo)), tape.const(1.0 / (mid_l - lo))
        )
        right = tape.record(
            "mul", tape.record("sub", tape.const(hi), x_node), tape.const(1.0 / (hi - mid_r))
        )
        prev_lo = tape.record("slice_cols", vals, lo=0, hi=c)
        prev_hi = tape.record("slice_cols", vals, lo=1, hi=c + 1)
        vals = tape.record(
            "add", tape.record("mul", left, prev_lo), tape.record("mul", right, prev_hi)
        )
    return vals


def param_count(net: Network) -> int:
    """Sum of P*Q*(n+r-1) over KAN layers plus weights+biases of MLP layers."""
    return net.n_params


def vectorize(net: Network) -> np.ndarray:
    return net.get_flat()


def devectorize(net: Network, flat: np.ndarray) -> None:
    net.set_flat(flat)


def make_kan_network(widths, n: int, r: int, input_domain=(0.0, 1.0),
                     hidden_domain=(-1.0, 1.0), normalizer: str = "affine",
                     mode: str = SPLINE, augment: str | None = None,
                     knot_counts=None) -> Network:
    """KAN with the given layer widths and per-layer uniform knot grids.

    ``knot_counts`` overrides the shared interval count n per layer.
    """
    layers = []
    counts = knot_counts if knot_counts is not None else [n] * (len(widths) - 1)
    if len(counts) != len(widths) - 1:
        raise ValueError("knot_counts must have one entry per layer")
    for i in range(len(widths) - 1):
        a, b = input_domain if i == 0 else hidden_domain
        knots = make_uniform_knots(a, b, counts[i], r)
        layers.append(KanLayer(widths[i], widths[i + 1], knots, mode=mode))
    return Network(layers, normalizer=normalizer, augment=augment)


def make_mlp_network(widths, activation: str = "tanh") -> Network:
    layers = []
    for i in range(len(widths) - 1):
        act = activation if i < len(widths) - 2 else "none"
        layers.append(MlpLayer(widths[i], widths[i + 1], activation=act))
    return Network(layers, normalizer="none")


def init_weights(net: Network, seed: int, scale: float = 0.1) -> None:
    """Seeded random init; KAN tensors N(0, scale^2/P), MLP Xavier-style."""
    rng = np.random.default_rng(seed)
    for lay in net.layers:
        if isinstance(lay, MlpLayer):
            lay.weights[:] = rng.standard_normal(lay.weights.shape) * np.sqrt(2.0 / (lay.P + lay.Q))
            lay.bias[:] = 0.0
        else:
            lay.weights[:] = rng.standard_normal(lay.weights.shape) * (scale / np.sqrt(lay.P))
            if lay.mode == RELU:
                # draw in spline scale, then convert, so both bases start
                # from the same random function
                tmp = KanLayer(lay.P, lay.Q, lay.knots, lay.weights, SPLINE)
                lay.weights[:] = tmp.to_relu_weights()


def convert_network(net: Network, mode: str) -> Network:
    """Network with every KAN layer re-parameterized in the given basis."""
    layers = []
    for lay in net.layers:
        layers.append(lay.converted(mode) if isinstance(lay, KanLayer) else lay.copy())
    return Network(layers, net.normalizer, net.augment)


def save_checkpoint(net: Network, path: str, extra: dict | None = None) -> None:
    """Weights in canonical flat order plus a json header describing the net."""
    header = {
        "schema": 1,
        "widths": net.widths,
        "normalizer": net.normalizer,
        "augment": net.augment,
        "layers": [],
    }
    for lay in net.layers:
        if isinstance(lay, MlpLayer):
            header["layers"].append({"kind": "mlp", "activation": lay.activation})
        else:
            header["layers"].append({
                "kind": "kan",
                "mode": lay.mode,
                "r": lay.knots.r,
                "n": lay.knots.n,
                "domain": [lay.knots.a, lay.knots.b],
            })
    if extra:
        header["extra"] = extra
    np.savez(path, header=json.dumps(header), weights=net.get_flat())


def load_checkpoint(path: str) -> Network:
    data = np.load(path, allow_pickle=False)
    header = json.loads(str(data["header"]))
    widths = header["widths"]
    layers = []
    for i, spec in enumerate(header["layers"]):
        if spec["kind"] == "mlp":
            layers.append(MlpLayer(widths[i], widths[i + 1], activation=spec["activation"]))
        else:
            a, b = spec["domain"]
            knots = make_uniform_knots(a, b, spec["n"], spec["r"])
            layers.append(KanLayer(widths[i], widths[i + 1], knots, mode=spec["mode"]))
    net = Network(layers, header["normalizer"], header.get("augment"))
    net.set_flat(data["weights"])
    return net
