"""Dense and banded linear algebra kernels used by every other module.

All arithmetic is float64 and every reduction runs in a fixed order, so
repeated runs are bit-identical.  numpy arrays are the storage format, but
the algorithms (matmul accumulation, Jacobi eigensolver, banded solves,
DFT) are written out here rather than delegated to LAPACK/BLAS solver
routines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BandedUpper",
    "SymEig",
    "as_matrix",
    "matmul",
    "banded_matvec",
    "banded_matmat",
    "banded_upper_solve",
    "banded_upper_solve_mat",
    "sym_eig",
    "max_singular_value",
    "dft2",
]


def as_matrix(a) -> np.ndarray:
    """Validate and convert to a finite float64 2-d array."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got ndim={m.ndim}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains non-finite entries")
    return m


def matmul(a, b) -> np.ndarray:
    """Matrix product with left-to-right summation order per row.

    Row i of the result is accumulated as sum_k a[i,k]*b[k,:] with k
    ascending, which matches a naive triple loop bit-for-bit.
    """
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} x {b.shape}")
    out = np.empty((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        acc = np.zeros(b.shape[1])
        row = a[i]
        for k in range(a.shape[1]):
            acc += row[k] * b[k]
        out[i] = acc
    return out


class BandedUpper:
    """Upper-triangular banded matrix stored by diagonals.

    ``diagonals[d][i]`` holds entry (i, i+d) for d in 0..bandwidth-1; all
    entries outside the band are zero by construction.
    """

    def __init__(self, dim: int, diagonals: list[np.ndarray]):
        if dim < 1:
            raise ValueError("dim must be positive")
        if len(diagonals) > dim:
            raise ValueError("bandwidth exceeds dimension")
        self.dim = dim
        self.diagonals = []
        for d, diag in enumerate(diagonals):
            diag = np.asarray(diag, dtype=np.float64)
            if diag.shape != (dim - d,):
                raise ValueError(f"diagonal {d} must have length {dim - d}")
            self.diagonals.append(diag)

    @property
    def bandwidth(self) -> int:
        return len(self.diagonals)

    @classmethod
    def identity(cls, dim: int) -> "BandedUpper":
        return cls(dim, [np.ones(dim)])

    def densify(self) -> np.ndarray:
        out = np.zeros((self.dim, self.dim))
        for d, diag in enumerate(self.diagonals):
            for i in range(self.dim - d):
                out[i, i + d] = diag[i]
        return out

    def copy(self) -> "BandedUpper":
        return BandedUpper(self.dim, [d.copy() for d in self.diagonals])

    def scale(self, c: float) -> "BandedUpper":
        return BandedUpper(self.dim, [c * d for d in self.diagonals])


def banded_matvec(a: BandedUpper, x: np.ndarray) -> np.ndarray:
    """y = A x touching only stored diagonals (O(dim * bandwidth))."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (a.dim,):
        raise ValueError(f"length mismatch: dim={a.dim}, len(x)={x.shape}")
    y = np.zeros(a.dim)
    for d, diag in enumerate(a.diagonals):
        y[: a.dim - d] += diag * x[d:]
    return y


def banded_matmat(a: BandedUpper, x: np.ndarray, transpose: bool = False) -> np.ndarray:
    """Apply A (or A^T) to every column of x, shape (dim, m)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != a.dim:
        raise ValueError("row count must equal dim")
    y = np.zeros_like(x)
    for d, diag in enumerate(a.diagonals):
        col = diag[:, None] if x.ndim == 2 else diag
        if transpose:
            y[d:] += col * x[: a.dim - d]
        else:
            y[: a.dim - d] += col * x[d:]
    return y


def banded_upper_solve(a: BandedUpper, y: np.ndarray, transpose: bool = False) -> np.ndarray:
    """Solve A x = y (back substitution) or A^T x = y (forward)."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (a.dim,):
        raise ValueError(f"length mismatch: dim={a.dim}, len(y)={y.shape}")
    return banded_upper_solve_mat(a, y[:, None], transpose=transpose)[:, 0]


def banded_upper_solve_mat(a: BandedUpper, y: np.ndarray, transpose: bool = False) -> np.ndarray:
    """Multi-right-hand-side variant of banded_upper_solve; y is (dim, m)."""
    main = a.diagonals[0]
    if np.any(main == 0.0):
        raise ZeroDivisionError("singular banded matrix: zero on main diagonal")
    y = np.asarray(y, dtype=np.float64)
    n, bw = a.dim, a.bandwidth
    x = np.zeros_like(y)
    if transpose:
        # A^T is lower triangular: forward substitution.
        for i in range(n):
            acc = y[i].copy()
            for d in range(1, min(bw, i + 1)):
                acc -= a.diagonals[d][i - d] * x[i - d]
            x[i] = acc / main[i]
    else:
        for i in range(n - 1, -1, -1):
            acc = y[i].copy()
            for d in range(1, min(bw, n - i)):
                acc -= a.diagonals[d][i] * x[i + d]
            x[i] = acc / main[i]
    return x


@dataclass(frozen=True)
class SymEig:
    """Eigendecomposition of a symmetric matrix, eigenvalues ascending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # column-orthonormal


def sym_eig(m, max_sweeps: int = 100) -> SymEig:
    """Classical cyclic Jacobi iteration for a symmetric matrix.

    Sweeps run until the off-diagonal Frobenius norm drops below
    1e-12 * ||M||_F; raises on asymmetric input or non-convergence.
    Intended for dimensions up to a few hundred.
    """
    a = as_matrix(m).copy()
    n = a.shape[0]
    if a.shape[1] != n:
        raise ValueError("sym_eig requires a square matrix")
    amax = np.max(np.abs(a)) if n else 0.0
    if amax > 0 and np.max(np.abs(a - a.T)) > 1e-12 * amax:
        raise ValueError("matrix is not symmetric to 1e-12 relative")
    a = 0.5 * (a + a.T)
    norm_f = math.sqrt(float(np.sum(a * a)))
    v = np.eye(n)
    if n == 1:
        return SymEig(np.array([a[0, 0]]), v)

    def offdiag_norm() -> float:
        off = a.copy()
        np.fill_diagonal(off, 0.0)
        return math.sqrt(float(np.sum(off * off)))

    converged = False
    for _ in range(max_sweeps):
        if offdiag_norm() <= 1e-12 * norm_f:
            converged = True
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 1.0 / (2.0 * theta)  # avoid overflow in theta**2
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                # A <- G^T A G for the (p, q) rotation G.
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        converged = offdiag_norm() <= 1e-12 * norm_f
    if not converged:
        raise RuntimeError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return SymEig(w[order], v[:, order])


def max_singular_value(m) -> float:
    """sqrt of the largest eigenvalue of M^T M."""
    m = as_matrix(m)
    gram = matmul(m.T, m)
    eig = sym_eig(gram)
    return math.sqrt(max(float(eig.eigenvalues[-1]), 0.0))


def dft2(field) -> np.ndarray:
    """Centered 2-d discrete Fourier magnitude spectrum of a real field.

    Naive O(N^2)-per-axis transform with a fixed accumulation order; the
    zero-frequency bin lands at (rows//2, cols//2).
    """
    f = as_matrix(field)
    rows, cols = f.shape
    if rows == 0 or cols == 0:
        raise ValueError("empty field")
    spec = _dft_axis0(f.astype(np.complex128))
    spec = _dft_axis0(spec.T).T
    spec = np.roll(np.roll(spec, rows // 2, axis=0), cols // 2, axis=1)
    return np.abs(spec)


def _dft_axis0(f: np.ndarray) -> np.ndarray:
    n = f.shape[0]
    freqs = np.arange(n)
    out = np.zeros_like(f)
    for k in range(n):
        w = np.exp(-2j * math.pi * freqs * k / n)
        out += w[:, None] * f[k][None, :]
    return out
