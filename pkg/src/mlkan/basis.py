"""Spline knot grids, B-spline and truncated-power bases, change of basis.

A knot vector of order r with n intervals on [a, b] carries the extended
knots t_i for i = 1-r .. n+r-1 (strictly increasing, t_0 = a, t_n = b) and
spans a spline space of dimension n+r-1.  The same space is spanned by the
truncated powers max(x - t_i, 0)^(r-1); ``build_cob`` constructs the banded
upper-triangular matrix relating the two bases, b_i = sum_j A[i,j] psi_j
on [a, b].

Step conventions: the order-1 B-spline is the indicator of [t_i, t_{i+1})
with the final interval closed, and the r=1 truncated power is the
half-open step 1{x >= t_i}.  With these choices the change-of-basis
identity holds pointwise on [a, b], knots included.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import BandedUpper, banded_matmat, banded_upper_solve_mat

__all__ = [
    "KnotVector",
    "CobMatrix",
    "make_uniform_knots",
    "make_knots",
    "eval_bspline",
    "eval_relu_power",
    "relu_power_values",
    "bspline_values",
    "build_cob",
    "uniform_cob_stencil",
    "verify_basis_identity",
]


@dataclass(frozen=True)
class KnotVector:
    """Strictly ordered extended knot set for splines of order r."""

    r: int
    n: int
    knots: np.ndarray  # t_{1-r} .. t_{n+r-1}, length n + 2r - 1
    h: float | None = field(default=None)  # spacing, uniform grids only

    def __post_init__(self):
        if self.r < 1:
            raise ValueError("order r must be >= 1")
        if self.n < 1:
            raise ValueError("interval count n must be >= 1")
        knots = np.asarray(self.knots, dtype=np.float64)
        if knots.shape != (self.n + 2 * self.r - 1,):
            raise ValueError(
                f"expected {self.n + 2 * self.r - 1} knots, got {knots.shape}"
            )
        if np.any(np.diff(knots) <= 0):
            raise ValueError("knots must be strictly increasing (degenerate knots rejected)")
        object.__setattr__(self, "knots", knots)

    @property
    def a(self) -> float:
        return float(self.t(0))

    @property
    def b(self) -> float:
        return float(self.t(self.n))

    @property
    def dim(self) -> int:
        """Basis dimension n + r - 1."""
        return self.n + self.r - 1

    def t(self, i: int) -> float:
        """Knot t_i for basis index i in 1-r .. n+r-1."""
        return float(self.knots[i + self.r - 1])

    def index_range(self) -> range:
        """Basis indices i = 1-r .. n-1."""
        return range(1 - self.r, self.n)


def make_uniform_knots(a: float, b: float, n: int, r: int) -> KnotVector:
    """Uniform grid: h = (b-a)/n and t_i = a + i*h for i = 1-r .. n+r-1."""
    if a >= b:
        raise ValueError("domain requires a < b")
    if n < 1:
        raise ValueError("interval count n must be >= 1")
    h = (b - a) / n
    idx = np.arange(1 - r, n + r)
    return KnotVector(r=r, n=n, knots=a + idx * h, h=h)


def make_knots(breakpoints, r: int) -> KnotVector:
    """Knot vector from interior breakpoints a = x_0 < ... < x_n = b.

    Exterior knots continue the end spacings outward.
    """
    br = np.asarray(breakpoints, dtype=np.float64)
    if br.ndim != 1 or br.size < 2:
        raise ValueError("need at least two breakpoints")
    n = br.size - 1
    left = br[0] + (br[0] - br[1]) * np.arange(r - 1, 0, -1)
    right = br[-1] + (br[-1] - br[-2]) * np.arange(1, r)
    return KnotVector(r=r, n=n, knots=np.concatenate([left, br, right]))


def eval_bspline(k: KnotVector, i: int, x: float) -> float:
    """b_i^[r](x) by the Cox-de Boor recursion; support in [t_i, t_{i+r}]."""
    if i not in k.index_range():
        raise IndexError(f"basis index {i} out of range")
    return _coxdeboor(k, k.r, i, float(x))


def _coxdeboor(k: KnotVector, order: int, i: int, x: float) -> float:
    if order == 1:
        if k.t(i) <= x < k.t(i + 1):
            return 1.0
        # for an order-1 basis, close the final interval so the basis
        # partitions unity up to b; higher orders get the correct value at
        # x = b from the half-open indicators alone
        if k.r == 1 and i == k.n - 1 and x == k.t(k.n):
            return 1.0
        return 0.0
    left = _coxdeboor(k, order - 1, i, x)
    right = _coxdeboor(k, order - 1, i + 1, x)
    out = 0.0
    if left != 0.0:
        out += (x - k.t(i)) / (k.t(i + order - 1) - k.t(i)) * left
    if right != 0.0:
        out += (k.t(i + order) - x) / (k.t(i + order) - k.t(i + 1)) * right
    return out


def eval_relu_power(k: KnotVector, i: int, x: float) -> float:
    """psi_i^[r](x) = max(x - t_i, 0)^(r-1); half-open step for r = 1."""
    if i not in k.index_range():
        raise IndexError(f"basis index {i} out of range")
    u = float(x) - k.t(i)
    if k.r == 1:
        return 1.0 if u >= 0.0 else 0.0
    return max(u, 0.0) ** (k.r - 1)


def relu_power_values(k: KnotVector, x) -> np.ndarray:
    """All psi_i^[r] at points x; shape (len(x), dim)."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    shifts = k.knots[: k.dim]
    u = x[:, None] - shifts[None, :]
    if k.r == 1:
        return (u >= 0.0).astype(np.float64)
    return np.maximum(u, 0.0) ** (k.r - 1)


def bspline_values(k: KnotVector, x) -> np.ndarray:
    """All b_i^[r] at points x via the vectorized recursion; shape (len(x), dim)."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    t = k.knots
    n_funcs = t.size - 1  # order-1 basis over every interval
    vals = ((t[None, :-1] <= x[:, None]) & (x[:, None] < t[None, 1:])).astype(np.float64)
    if k.r == 1:
        closing = x == k.t(k.n)
        if np.any(closing):
            vals[closing, k.n - 1] = 1.0
    for order in range(2, k.r + 1):
        n_funcs -= 1
        lo = t[:n_funcs]
        mid_l = t[order - 1 : order - 1 + n_funcs]
        mid_r = t[1 : 1 + n_funcs]
        hi = t[order : order + n_funcs]
        left = (x[:, None] - lo[None, :]) / (mid_l - lo)[None, :]
        right = (hi[None, :] - x[:, None]) / (hi - mid_r)[None, :]
        vals = left * vals[:, :n_funcs] + right * vals[:, 1 : n_funcs + 1]
    return vals


@dataclass(frozen=True)
class CobMatrix:
    """Change-of-basis matrix A^[r] (optionally h^(r-1)-scaled) in banded form."""

    inner: BandedUpper
    knots: KnotVector
    scaled: bool = False

    @property
    def dim(self) -> int:
        return self.inner.dim

    def apply(self, x: np.ndarray) -> np.ndarray:
        """A x, columns of x if 2-d."""
        return banded_matmat(self.inner, x)

    def apply_t(self, x: np.ndarray) -> np.ndarray:
        """A^T x."""
        return banded_matmat(self.inner, x, transpose=True)

    def solve(self, y: np.ndarray) -> np.ndarray:
        """A^{-1} y by back substitution."""
        return banded_upper_solve_mat(self.inner, y)

    def solve_t(self, y: np.ndarray) -> np.ndarray:
        """A^{-T} y by forward substitution."""
        return banded_upper_solve_mat(self.inner, y, transpose=True)

    def densify(self) -> np.ndarray:
        return self.inner.densify()


def build_cob(k: KnotVector, scaled: bool = False) -> CobMatrix:
    """Build A^[r] from A^[1] by applying the order recurrence r-1 times.

    A^[1] is bidiagonal (+1, -1); each step forms
    A^[s][i, :] = A^[s-1][i, :]/(t_{i+s-1}-t_i) - A^[s-1][i+1, :]/(t_{i+s}-t_{i+1})
    with the row past the matrix treated as zero.  For uniform knots this
    reproduces the closed-form Toeplitz stencil (see uniform_cob_stencil).
    """
    dim = k.dim
    diags = [np.ones(dim)]
    if dim > 1:
        diags.append(-np.ones(dim - 1))
    for s in range(2, k.r + 1):
        base = 1 - k.r  # basis index of row 0
        c1 = np.array([1.0 / (k.t(i + s - 1) - k.t(i)) for i in range(base, base + dim)])
        c2 = np.array([1.0 / (k.t(i + s) - k.t(i + 1)) for i in range(base, base + dim)])
        new_diags = []
        for d in range(min(s, dim - 1) + 1):
            length = dim - d
            vals = np.zeros(length)
            if d < len(diags):
                vals += c1[:length] * diags[d][:length]
            if d >= 1:
                prev = diags[d - 1]
                # row i+1 of A^[s-1] contributes its entry at column i+d
                m = min(length, prev.size - 1)
                if m > 0:
                    vals[:m] -= c2[:m] * prev[1 : m + 1]
            new_diags.append(vals)
        diags = new_diags
    banded = BandedUpper(dim, diags)
    if scaled:
        if k.h is None:
            raise ValueError("scaled change of basis requires uniform knots")
        banded = banded.scale(k.h ** (k.r - 1))
    return CobMatrix(inner=banded, knots=k, scaled=scaled)


def uniform_cob_stencil(r: int, h: float, scaled: bool = False) -> np.ndarray:
    """Closed-form Toeplitz row of A^[r] on uniform knots: entry d = j - i.

    A[i, i+d] = (-1)^d * r / (d! (r-d)! h^(r-1)) for 0 <= d <= r.
    """
    scale = 1.0 if scaled else h ** (1 - r)
    return np.array(
        [(-1) ** d * r / (math.factorial(d) * math.factorial(r - d)) * scale for d in range(r + 1)]
    )


def verify_basis_identity(k: KnotVector, samples: int = 400) -> float:
    """Max over (i, x) of |b_i(x) - sum_j A[i,j] psi_j(x)| on a grid in [a, b]."""
    x = np.linspace(k.a, k.b, samples)
    b_vals = bspline_values(k, x)  # (m, dim)
    psi = relu_power_values(k, x)  # (m, dim)
    a = build_cob(k)
    recon = banded_matmat(a.inner, psi.T).T
    return float(np.max(np.abs(b_vals - recon)))
