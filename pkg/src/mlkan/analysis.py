"""Spectral and structural diagnostics of the change of basis.

On uniform knots A^[r] acts like a scaled forward difference of the r-th
derivative, so A^T A orders its eigenvectors from smooth to oscillatory
with eigenvalues spreading like n^(2r).  These routines reproduce that
picture numerically: eigenvalue ratios and their growth rate, eigenvector
sign-change counts, the finite-difference stencil match, the Toeplitz
singular-value bound on the rescaled matrix, and the induced bound between
the two bases' tangent-kernel spectral radii.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import ParamSet, Tape, backward
from .basis import build_cob, make_uniform_knots, uniform_cob_stencil
from .linalg import banded_matmat, banded_upper_solve_mat, dft2, matmul, sym_eig
from .model import KanLayer, Network, convert_network

__all__ = [
    "EigenReport",
    "SpectrumReport",
    "eigen_report",
    "ratio_scaling",
    "fd_stencil_check",
    "singular_bound_check",
    "ntk_bound_check",
    "residual_spectrum",
    "sign_changes",
    "spearman",
]


def sign_changes(v: np.ndarray, floor: float = 1e-12) -> int:
    """Strict sign alternations, skipping entries below floor * ||v||_inf."""
    v = np.asarray(v)
    cutoff = floor * np.max(np.abs(v))
    signs = np.sign(v[np.abs(v) >= cutoff])
    return int(np.sum(signs[1:] * signs[:-1] < 0))


def spearman(a, b) -> float:
    """Spearman rank correlation with tie-averaged ranks."""

    def ranks(x):
        x = np.asarray(x, dtype=np.float64)
        order = np.argsort(x, kind="stable")
        r = np.empty(x.size)
        i = 0
        while i < x.size:
            j = i
            while j + 1 < x.size and x[order[j + 1]] == x[order[i]]:
                j += 1
            r[order[i : j + 1]] = 0.5 * (i + j) + 1.0
            i = j + 1
        return r

    ra, rb = ranks(a), ranks(b)
    ra -= ra.mean()
    rb -= rb.mean()
    denom = math.sqrt(float(ra @ ra) * float(rb @ rb))
    return float(ra @ rb) / denom if denom else 0.0


@dataclass(frozen=True)
class EigenReport:
    r: int
    n: int
    eigenvalues: np.ndarray  # ascending, from the Jacobi decomposition
    ratio: float  # lambda_max / lambda_min
    sign_changes: np.ndarray  # per eigenvector, same order


def eigen_report(r: int, n: int) -> EigenReport:
    """Eigenstructure of (A^[r])^T A^[r] on uniform knots over [0, 1].

    The extreme-eigenvalue ratio is evaluated as
    lambda_max(A^T A) * lambda_max(A^{-1} A^{-T}) so it stays accurate even
    when lambda_min falls below machine precision relative to lambda_max.
    """
    if not (1 <= r <= 5):
        raise ValueError("order r must be in 1..5")
    k = make_uniform_knots(0.0, 1.0, n, r)
    a = build_cob(k)
    dense = a.densify()
    gram = matmul(dense.T, dense)
    eig = sym_eig(gram)
    counts = np.array([sign_changes(eig.eigenvectors[:, i]) for i in range(k.dim)])
    inv = banded_upper_solve_mat(a.inner, np.eye(k.dim))  # A^{-1}
    inv_gram = matmul(inv, inv.T)
    lam_max = float(eig.eigenvalues[-1])
    lam_inv_max = _power_lambda_max(inv_gram)
    return EigenReport(r, n, eig.eigenvalues, lam_max * lam_inv_max, counts)


def _power_lambda_max(m: np.ndarray, iters: int = 300) -> float:
    v = np.ones(m.shape[0]) / math.sqrt(m.shape[0])
    lam = 0.0
    for _ in range(iters):
        w = m @ v
        lam = float(v @ w)
        norm = float(np.sqrt(w @ w))
        if norm == 0.0:
            return 0.0
        v = w / norm
    return lam


def ratio_scaling(r: int, ns) -> float:
    """Least-squares slope of log(ratio) vs log(n); expected near 2r."""
    ns = list(ns)
    if len(ns) < 4 or sorted(ns) != ns:
        raise ValueError("need at least 4 ascending knot counts")
    logs_n = np.log(np.asarray(ns, dtype=np.float64))
    logs_ratio = np.array([math.log(eigen_report(r, n).ratio) for n in ns])
    x = logs_n - logs_n.mean()
    return float((x @ (logs_ratio - logs_ratio.mean())) / (x @ x))


def fd_stencil_check(r: int, n: int, h: float | None = None) -> float:
    """Interior rows of A^[r] against the r-th forward-difference stencil.

    Rows are compared to (-1)^d binom(r,d) / ((r-1)! h^(r-1)) and, after
    multiplying by the scalar (-1)^r (r-1)!/h, to the classical stencil
    (-1)^(r-d) binom(r,d) / h^r.  Returns the max relative deviation.
    """
    if h is None:
        h = 1.0 / n
    k = make_uniform_knots(0.0, n * h, n, r)
    dense = build_cob(k).densify()
    stencil = uniform_cob_stencil(r, h)
    fd = np.array([(-1) ** (r - d) * math.comb(r, d) / h**r for d in range(r + 1)])
    scalar = (-1) ** r * math.factorial(r - 1) / h
    dev = 0.0
    scale = np.max(np.abs(fd))
    for i in range(k.dim - r):  # rows whose full stencil fits
        row = dense[i, i : i + r + 1]
        dev = max(dev, float(np.max(np.abs(row - stencil))) / np.max(np.abs(stencil)))
        dev = max(dev, float(np.max(np.abs(row * scalar - fd))) / scale)
    return dev


def singular_bound_check(r: int, n: int) -> tuple[float, float]:
    """(sigma_max of the h^(r-1)-scaled matrix, generating-function bound).

    The bound 2^r/(r-1)! holds for every n by Toeplitz operator theory.
    """
    from .linalg import max_singular_value

    k = make_uniform_knots(0.0, 1.0, n, r)
    scaled = build_cob(k, scaled=True)
    sigma = max_singular_value(scaled.densify())
    bound = 2.0**r / math.factorial(r - 1)
    return sigma, bound


def _normalized_relu_jacobian(net: Network, x: np.ndarray) -> np.ndarray:
    """Rows: d(output_i)/d(weights) in the h^(r-1)-normalized ReLU basis."""
    relu_net = convert_network(net, "relu")
    m = x.shape[0]
    jac = np.zeros((m, relu_net.n_params))
    pset = ParamSet(relu_net.get_flat())
    tape = Tape()
    out = relu_net.forward_tape(tape, x, pset=pset, order=0)
    if tape.val(out.v).shape[1] != 1:
        raise ValueError("tangent-kernel check expects a scalar-output network")
    for i in range(m):
        pset.zero_grad()
        seed = np.zeros((m, 1))
        seed[i, 0] = 1.0
        backward(tape, out.v, seed=seed)
        jac[i] = pset.grad
    for idx, lay in enumerate(relu_net.layers):
        # psi = h^(r-1) * phi, so d/d(normalized weights) = d/dW * h^(1-r)
        off = relu_net.layer_offset(idx)
        jac[:, off : off + lay.size] *= lay.knots.h ** (1 - lay.knots.r)
    return jac


def ntk_bound_check(net: Network, x: np.ndarray) -> tuple[float, float, float]:
    """Spectral radii of the tangent kernels in both bases and their ratio.

    NTK_relu = J J^T in the normalized-ReLU parameterization; the spline
    kernel applies the block-diagonal scaled change of basis to J.  Raises
    if rho_spline exceeds 4 * rho_relu + 1e-6.
    """
    x = np.asarray(x, dtype=np.float64)
    jac = _normalized_relu_jacobian(net, x)
    ntk_relu = matmul(jac, jac.T)
    rho_relu = float(sym_eig(ntk_relu).eigenvalues[-1])
    ja = np.empty_like(jac)
    offset = 0
    for lay in net.layers:
        if not isinstance(lay, KanLayer):
            raise ValueError("tangent-kernel check requires a pure KAN network")
        scaled = build_cob(lay.knots, scaled=True)
        seg = jac[:, offset : offset + lay.size]
        cols = seg.reshape(x.shape[0] * lay.Q * lay.P, lay.knots.dim).T
        ja[:, offset : offset + lay.size] = (
            banded_matmat(scaled.inner, cols, transpose=True).T.reshape(seg.shape)
        )
        offset += lay.size
    ntk_spline = matmul(ja, ja.T)
    rho_spline = float(sym_eig(ntk_spline).eigenvalues[-1])
    ratio = rho_spline / rho_relu if rho_relu else float("inf")
    if rho_spline > 4.0 * rho_relu + 1e-6:
        raise AssertionError(
            f"tangent-kernel bound violated: {rho_spline} > 4 * {rho_relu}"
        )
    return rho_spline, rho_relu, ratio


@dataclass(frozen=True)
class SpectrumReport:
    field: np.ndarray
    magnitudes: np.ndarray  # centered DFT magnitudes
    cross_axis0: np.ndarray  # section along axis 0 at zero second frequency
    cross_axis1: np.ndarray
    total_energy: float


def residual_spectrum(field: np.ndarray) -> SpectrumReport:
    """Centered magnitude spectrum, axis cross-sections, total energy."""
    field = np.asarray(field, dtype=np.float64)
    mags = dft2(field)
    c0, c1 = field.shape[0] // 2, field.shape[1] // 2
    energy = float(np.sum(mags**2) / field.size)
    return SpectrumReport(field, mags, mags[:, c1].copy(), mags[c0, :].copy(), energy)
