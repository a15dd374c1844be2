"""Reverse-mode automatic differentiation on an explicit tape.

Nodes hold float64 numpy arrays and elementwise ops broadcast, so a whole
batch of collocation points rides through one tape.  Forward jets
(value, first, second directional derivative) are propagated as ordinary
tape nodes, which makes losses built from input derivatives (PDE
residuals) differentiable with respect to the parameters by the same
backward sweep.

Besides the elementary scalar ops (add, sub, mul, div, pow_int, relu_pow,
sin, cos, tanh, sigmoid, exp, abs, max0) the tape carries a few structural
ops (sum, column select, banded matrix application, layer contractions) so
network layers cost a handful of vectorized ops instead of one node per
weight.  Backward sweeps run in fixed reverse order; two sweeps over the
same tape are bitwise identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ELEMENTARY_OPS",
    "ParamSet",
    "Tape",
    "Jet",
    "backward",
    "forward_jet",
    "jet_input",
    "jet_add",
    "jet_sub",
    "jet_mul",
    "jet_div",
    "jet_scale",
    "jet_shift",
    "jet_unary",
    "jet_clip",
    "jet_banded",
    "jet_col",
    "jet_concat",
    "jet_matw",
    "jet_contract",
]

ELEMENTARY_OPS = frozenset(
    {"add", "sub", "mul", "div", "pow_int", "relu_pow", "sin", "cos", "tanh",
     "sigmoid", "exp", "abs", "max0"}
)

_STRUCTURAL_OPS = frozenset(
    {"const", "param", "neg", "scale", "clip", "sum", "col", "slice_cols",
     "banded", "concat", "matw", "kan_contract"}
)


class ParamSet:
    """Flat trainable parameter vector with a paired gradient accumulator."""

    def __init__(self, values):
        self.values = np.array(values, dtype=np.float64).ravel()
        self.grad = np.zeros_like(self.values)

    @property
    def size(self) -> int:
        return self.values.size

    def zero_grad(self) -> None:
        self.grad[:] = 0.0


def _relu_pow_value(u: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return (u >= 0.0).astype(np.float64)
    clipped = np.maximum(u, 0.0)
    if p == 1:
        return clipped
    # repeated multiplication beats pow() for the small integer exponents
    out = clipped * clipped
    for _ in range(p - 2):
        out *= clipped
    return out


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class _Node:
    __slots__ = ("op", "args", "value", "aux")

    def __init__(self, op, args, value, aux):
        self.op = op
        self.args = args
        self.value = value
        self.aux = aux


class Tape:
    """Append-only computation record; operands always precede results."""

    def __init__(self):
        self.nodes: list[_Node] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def val(self, i: int) -> np.ndarray:
        return self.nodes[i].value

    def _push(self, op, args, value, aux=None) -> int:
        self.nodes.append(_Node(op, args, np.asarray(value, dtype=np.float64), aux))
        return len(self.nodes) - 1

    def const(self, value) -> int:
        return self._push("const", (), value)

    def param(self, pset: ParamSet, offset: int, shape) -> int:
        size = int(np.prod(shape))
        if offset < 0 or offset + size > pset.size:
            raise IndexError("parameter slice out of range")
        view = pset.values[offset : offset + size].reshape(shape)
        return self._push("param", (), view, (pset, offset))

    def record(self, op: str, *args: int, **aux) -> int:
        """Append an op over existing node indices and evaluate it."""
        for a in args:
            if not (0 <= a < len(self.nodes)):
                raise IndexError(f"operand index {a} out of range")
        vals = [self.nodes[a].value for a in args]
        if op == "add":
            value = vals[0] + vals[1]
        elif op == "sub":
            value = vals[0] - vals[1]
        elif op == "mul":
            value = vals[0] * vals[1]
        elif op == "div":
            value = vals[0] / vals[1]
        elif op == "neg":
            value = -vals[0]
        elif op == "scale":
            value = aux["c"] * vals[0]
        elif op == "sin":
            value = np.sin(vals[0])
        elif op == "cos":
            value = np.cos(vals[0])
        elif op == "tanh":
            value = np.tanh(vals[0])
        elif op == "sigmoid":
            value = _sigmoid(vals[0])
        elif op == "exp":
            value = np.exp(vals[0])
        elif op == "abs":
            value = np.abs(vals[0])
        elif op == "max0":
            value = np.maximum(vals[0], 0.0)
        elif op == "pow_int":
            value = vals[0] ** aux["k"]
        elif op == "relu_pow":
            value = _relu_pow_value(vals[0], aux["p"])
        elif op == "clip":
            value = np.clip(vals[0], aux["lo"], aux["hi"])
        elif op == "sum":
            value = np.sum(vals[0])
        elif op == "col":
            value = vals[0][:, aux["j"] : aux["j"] + 1]
        elif op == "slice_cols":
            value = vals[0][:, aux["lo"] : aux["hi"]]
        elif op == "banded":
            value = _banded_apply(vals[0], aux["diagonals"], aux.get("transpose", False))
        elif op == "basis_table":
            from ._kernels import basis_table

            value = basis_table(vals[0][:, 0], aux["knots"], aux["diags"],
                                aux["p"], aux["k"], aux["h"], aux["compact"])
        elif op == "concat":
            value = np.concatenate(vals, axis=1)
        elif op == "matw":
            value = vals[0] @ vals[1].T
        elif op == "kan_contract":
            w = vals[0]
            acc = vals[1] @ w[:, 0, :].T
            for p in range(1, w.shape[1]):
                acc = acc + vals[1 + p] @ w[:, p, :].T
            value = acc
        else:
            raise ValueError(f"unknown op {op!r}")
        return self._push(op, args, value, aux or None)

    def local_partials(self, i: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(value, d/dx, d2/dx2) of a unary elementary node w.r.t. its input."""
        node = self.nodes[i]
        x = self.nodes[node.args[0]].value
        v = node.value
        if node.op == "relu_pow":
            p = node.aux["p"]
            d1 = p * _relu_pow_value(x, p - 1) if p >= 1 else np.zeros_like(v)
            d2 = p * (p - 1) * _relu_pow_value(x, p - 2) if p >= 2 else np.zeros_like(v)
        elif node.op == "pow_int":
            k = node.aux["k"]
            d1 = k * x ** (k - 1) if k >= 1 else np.zeros_like(v)
            d2 = k * (k - 1) * x ** (k - 2) if k >= 2 else np.zeros_like(v)
        elif node.op == "sin":
            d1, d2 = np.cos(x), -v
        elif node.op == "cos":
            d1, d2 = -np.sin(x), -v
        elif node.op == "exp":
            d1, d2 = v, v
        elif node.op == "tanh":
            d1 = 1.0 - v * v
            d2 = -2.0 * v * d1
        elif node.op == "sigmoid":
            d1 = v * (1.0 - v)
            d2 = d1 * (1.0 - 2.0 * v)
        elif node.op == "abs":
            d1, d2 = np.sign(x), np.zeros_like(v)
        elif node.op == "max0":
            d1, d2 = (x >= 0.0).astype(np.float64), np.zeros_like(v)
        else:
            raise ValueError(f"no local partials for op {node.op!r}")
        return v, d1, d2


def _first_partial(op: str, x: np.ndarray, v: np.ndarray, aux) -> np.ndarray:
    if op == "relu_pow":
        p = aux["p"]
        return p * _relu_pow_value(x, p - 1) if p >= 1 else np.zeros_like(v)
    if op == "pow_int":
        k = aux["k"]
        return k * x ** (k - 1) if k >= 1 else np.zeros_like(v)
    if op == "sin":
        return np.cos(x)
    if op == "cos":
        return -np.sin(x)
    if op == "exp":
        return v
    if op == "tanh":
        return 1.0 - v * v
    if op == "sigmoid":
        return v * (1.0 - v)
    if op == "abs":
        return np.sign(x)
    return (x >= 0.0).astype(np.float64)  # max0


def _banded_apply(x: np.ndarray, diagonals, transpose: bool) -> np.ndarray:
    """Apply a banded upper matrix along the last axis (rows of x)."""
    dim = x.shape[-1]
    out = np.zeros_like(x)
    scratch = np.empty_like(x)
    for d, diag in enumerate(diagonals):
        tmp = scratch[..., : dim - d]
        if transpose:
            np.multiply(x[..., : dim - d], diag, out=tmp)
            out[..., d:] += tmp
        else:
            np.multiply(x[..., d:], diag, out=tmp)
            out[..., : dim - d] += tmp
    return out


def _unbroadcast(adj: np.ndarray, shape: tuple) -> np.ndarray:
    if adj.shape == shape:
        return adj
    while adj.ndim > len(shape):
        adj = adj.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and adj.shape[ax] != 1:
            adj = adj.sum(axis=ax, keepdims=True)
    return adj.reshape(shape)


def backward(tape: Tape, output: int, seed=None) -> list:
    """Reverse sweep from a scalar output node; accumulates into ParamSets.

    Returns the adjoint list (None where a node is unreachable).
    """
    if not (0 <= output < len(tape.nodes)):
        raise IndexError("output node not on tape")
    out_val = tape.nodes[output].value
    if seed is None:
        if out_val.size != 1:
            raise ValueError("backward requires a scalar output node")
        seed = np.ones_like(out_val)
    adjoints: list = [None] * (output + 1)
    adjoints[output] = np.asarray(seed, dtype=np.float64)

    def acc(idx, contribution, shape):
        # adjoint arrays are never mutated in place, so aliasing is safe
        contribution = _unbroadcast(np.asarray(contribution), shape)
        if adjoints[idx] is None:
            adjoints[idx] = contribution
        else:
            adjoints[idx] = adjoints[idx] + contribution

    for i in range(output, -1, -1):
        adj = adjoints[i]
        if adj is None:
            continue
        node = tape.nodes[i]
        op = node.op
        if op == "const":
            continue
        if op == "param":
            pset, offset = node.aux
            pset.grad[offset : offset + node.value.size] += adj.ravel()
            continue
        args = node.args
        vals = [tape.nodes[a].value for a in args]
        shapes = [v.shape for v in vals]
        if op == "add":
            acc(args[0], adj, shapes[0])
            acc(args[1], adj, shapes[1])
        elif op == "sub":
            acc(args[0], adj, shapes[0])
            acc(args[1], -adj, shapes[1])
        elif op == "mul":
            acc(args[0], adj * vals[1], shapes[0])
            acc(args[1], adj * vals[0], shapes[1])
        elif op == "div":
            acc(args[0], adj / vals[1], shapes[0])
            acc(args[1], -adj * node.value / vals[1], shapes[1])
        elif op == "neg":
            acc(args[0], -adj, shapes[0])
        elif op == "scale":
            acc(args[0], node.aux["c"] * adj, shapes[0])
        elif op in ("sin", "cos", "tanh", "sigmoid", "exp", "abs", "max0",
                    "pow_int", "relu_pow"):
            acc(args[0], adj * _first_partial(op, vals[0], node.value, node.aux), shapes[0])
        elif op == "clip":
            x = vals[0]
            mask = (x >= node.aux["lo"]) & (x <= node.aux["hi"])
            acc(args[0], adj * mask, shapes[0])
        elif op == "sum":
            acc(args[0], np.broadcast_to(adj, shapes[0]), shapes[0])
        elif op == "col":
            full = np.zeros(shapes[0])
            full[:, node.aux["j"] : node.aux["j"] + 1] = adj
            acc(args[0], full, shapes[0])
        elif op == "slice_cols":
            full = np.zeros(shapes[0])
            full[:, node.aux["lo"] : node.aux["hi"]] = adj
            acc(args[0], full, shapes[0])
        elif op == "banded":
            t = not node.aux.get("transpose", False)
            acc(args[0], _banded_apply(adj, node.aux["diagonals"], t), shapes[0])
        elif op == "basis_table":
            from ._kernels import basis_table_backward

            a = node.aux
            dz = basis_table_backward(vals[0][:, 0], a["knots"], a["diags"],
                                      a["p"], a["k"], a["h"], a["compact"],
                                      np.ascontiguousarray(adj))
            acc(args[0], dz[:, None], shapes[0])
        elif op == "concat":
            start = 0
            for a, shape in zip(args, shapes):
                width = shape[1]
                acc(a, adj[:, start : start + width], shape)
                start += width
        elif op == "matw":
            acc(args[0], adj @ vals[1], shapes[0])
            acc(args[1], adj.T @ vals[0], shapes[1])
        elif op == "kan_contract":
            w = vals[0]
            dw = np.zeros_like(w)
            for p in range(w.shape[1]):
                dw[:, p, :] = adj.T @ vals[1 + p]
                acc(args[1 + p], adj @ w[:, p, :], shapes[1 + p])
            acc(args[0], dw, shapes[0])
        else:
            raise ValueError(f"no backward rule for op {op!r}")
    return adjoints


# ---------------------------------------------------------------------------
# Forward jets: (value, first, second) directional derivatives as tape nodes.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Jet:
    """Node-index triple carrying a value and its directional derivatives."""

    v: int
    d1: int | None = None
    d2: int | None = None

    @property
    def order(self) -> int:
        if self.d2 is not None:
            return 2
        return 1 if self.d1 is not None else 0


def jet_input(tape: Tape, value, seed=None, order: int = 2) -> Jet:
    """Leaf jet: inputs carry (value, seed component, 0)."""
    value = np.asarray(value, dtype=np.float64)
    v = tape.const(value)
    if seed is None or order == 0:
        return Jet(v)
    d1 = tape.const(np.broadcast_to(np.asarray(seed, dtype=np.float64), value.shape).copy())
    if order == 1:
        return Jet(v, d1)
    return Jet(v, d1, tape.const(np.zeros_like(value)))


def _binary(tape, op, a, b):
    return tape.record(op, a, b)


def jet_add(t: Tape, a: Jet, b: Jet) -> Jet:
    return _jet_linear2(t, "add", a, b)


def jet_sub(t: Tape, a: Jet, b: Jet) -> Jet:
    return _jet_linear2(t, "sub", a, b)


def _jet_linear2(t, op, a, b):
    v = _binary(t, op, a.v, b.v)
    order = min(a.order, b.order)
    d1 = _binary(t, op, a.d1, b.d1) if order >= 1 else None
    d2 = _binary(t, op, a.d2, b.d2) if order >= 2 else None
    return Jet(v, d1, d2)


def jet_scale(t: Tape, a: Jet, c: float) -> Jet:
    v = t.record("scale", a.v, c=c)
    d1 = t.record("scale", a.d1, c=c) if a.d1 is not None else None
    d2 = t.record("scale", a.d2, c=c) if a.d2 is not None else None
    return Jet(v, d1, d2)


def jet_shift(t: Tape, a: Jet, const_node: int) -> Jet:
    """Add a constant: derivatives pass through untouched."""
    return Jet(t.record("add", a.v, const_node), a.d1, a.d2)


def jet_mul(t: Tape, a: Jet, b: Jet) -> Jet:
    v = t.record("mul", a.v, b.v)
    order = min(a.order, b.order)
    d1 = d2 = None
    if order >= 1:
        d1 = t.record("add", t.record("mul", a.d1, b.v), t.record("mul", a.v, b.d1))
    if order >= 2:
        cross = t.record("scale", t.record("mul", a.d1, b.d1), c=2.0)
        d2 = t.record(
            "add",
            t.record("add", t.record("mul", a.d2, b.v), cross),
            t.record("mul", a.v, b.d2),
        )
    return Jet(v, d1, d2)


def jet_div(t: Tape, a: Jet, b: Jet) -> Jet:
    v = t.record("div", a.v, b.v)
    order = min(a.order, b.order)
    d1 = d2 = None
    if order >= 1:
        # q' = (a' - q b') / b
        d1 = t.record("div", t.record("sub", a.d1, t.record("mul", v, b.d1)), b.v)
    if order >= 2:
        two_d1b1 = t.record("scale", t.record("mul", d1, b.d1), c=2.0)
        num = t.record("sub", t.record("sub", a.d2, two_d1b1), t.record("mul", v, b.d2))
        d2 = t.record("div", num, b.v)
    return Jet(v, d1, d2)


def _unary_deriv_nodes(t: Tape, op: str, x: int, v: int, aux) -> tuple[int, int]:
    """Nodes for f'(x) and f''(x) of a supported unary op."""
    if op == "sin":
        return t.record("cos", x), t.record("neg", v)
    if op == "cos":
        return t.record("neg", t.record("sin", x)), t.record("neg", v)
    if op == "exp":
        return v, v
    if op == "tanh":
        one = t.const(1.0)
        f1 = t.record("sub", one, t.record("mul", v, v))
        f2 = t.record("scale", t.record("mul", v, f1), c=-2.0)
        return f1, f2
    if op == "sigmoid":
        one = t.const(1.0)
        f1 = t.record("mul", v, t.record("sub", one, v))
        f2 = t.record("mul", f1, t.record("sub", one, t.record("scale", v, c=2.0)))
        return f1, f2
    if op == "relu_pow":
        p = aux["p"]
        zero = t.const(0.0)
        f1 = t.record("scale", t.record("relu_pow", x, p=p - 1), c=float(p)) if p >= 1 else zero
        f2 = (
            t.record("scale", t.record("relu_pow", x, p=p - 2), c=float(p * (p - 1)))
            if p >= 2
            else zero
        )
        return f1, f2
    if op == "pow_int":
        k = aux["k"]
        zero = t.const(0.0)
        f1 = t.record("scale", t.record("pow_int", x, k=k - 1), c=float(k)) if k >= 1 else zero
        f2 = (
            t.record("scale", t.record("pow_int", x, k=k - 2), c=float(k * (k - 1)))
            if k >= 2
            else zero
        )
        return f1, f2
    raise ValueError(f"op {op!r} not supported in jet mode")


def jet_unary(t: Tape, op: str, a: Jet, **aux) -> Jet:
    v = t.record(op, a.v, **aux)
    if a.order == 0:
        return Jet(v)
    f1, f2 = _unary_deriv_nodes(t, op, a.v, v, aux)
    d1 = t.record("mul", f1, a.d1)
    d2 = None
    if a.order >= 2:
        curv = t.record("mul", f2, t.record("mul", a.d1, a.d1))
        d2 = t.record("add", curv, t.record("mul", f1, a.d2))
    return Jet(v, d1, d2)


def jet_clip(t: Tape, a: Jet, lo: float, hi: float) -> Jet:
    v = t.record("clip", a.v, lo=lo, hi=hi)
    if a.order == 0:
        return Jet(v)
    x = t.val(a.v)
    mask = t.const(((x >= lo) & (x <= hi)).astype(np.float64))
    d1 = t.record("mul", mask, a.d1)
    d2 = t.record("mul", mask, a.d2) if a.order >= 2 else None
    return Jet(v, d1, d2)


def jet_banded(t: Tape, a: Jet, diagonals, transpose: bool = False) -> Jet:
    rec = lambda idx: t.record("banded", idx, diagonals=diagonals, transpose=transpose)
    return Jet(
        rec(a.v),
        rec(a.d1) if a.d1 is not None else None,
        rec(a.d2) if a.d2 is not None else None,
    )


def jet_col(t: Tape, a: Jet, j: int) -> Jet:
    rec = lambda idx: t.record("col", idx, j=j)
    return Jet(
        rec(a.v),
        rec(a.d1) if a.d1 is not None else None,
        rec(a.d2) if a.d2 is not None else None,
    )


def jet_concat(t: Tape, jets: list[Jet]) -> Jet:
    order = min(j.order for j in jets)
    v = t.record("concat", *[j.v for j in jets])
    d1 = t.record("concat", *[j.d1 for j in jets]) if order >= 1 else None
    d2 = t.record("concat", *[j.d2 for j in jets]) if order >= 2 else None
    return Jet(v, d1, d2)


def jet_matw(t: Tape, a: Jet, w_node: int) -> Jet:
    rec = lambda idx: t.record("matw", idx, w_node)
    return Jet(
        rec(a.v),
        rec(a.d1) if a.d1 is not None else None,
        rec(a.d2) if a.d2 is not None else None,
    )


def jet_contract(t: Tape, w_node: int, basis_jets: list[Jet]) -> Jet:
    order = min(j.order for j in basis_jets)
    v = t.record("kan_contract", w_node, *[j.v for j in basis_jets])
    d1 = d2 = None
    if order >= 1:
        d1 = t.record("kan_contract", w_node, *[j.d1 for j in basis_jets])
    if order >= 2:
        d2 = t.record("kan_contract", w_node, *[j.d2 for j in basis_jets])
    return Jet(v, d1, d2)


def forward_jet(builder, value, seed, order: int = 2, tape: Tape | None = None):
    """Run a tape-builder on jet inputs; returns (tape, jet, values).

    ``builder(tape, jet) -> Jet`` describes the computation; ``value`` and
    ``seed`` give the input point and the directional seed.
    """
    t = tape if tape is not None else Tape()
    jet = builder(t, jet_input(t, value, seed, order=order))
    vals = tuple(None if idx is None else t.val(idx) for idx in (jet.v, jet.d1, jet.d2))
    return t, jet, vals
