"""Stochastic Galerkin system for the randomized complete electrode model.

Couples the FEM matrices of one mesh with the chaos moment matrices into
the symmetric block system

    [[Delta, Upsilon], [Upsilon^T, Pi]] [alpha; beta] = [0; c],

where Delta carries the conductivity and contact terms, Upsilon/Pi the
electrode coupling in the mean-free voltage basis v_i = e_1 - e_{i+1},
and c the injected current pattern.  Unknowns are chaos coefficients of
the interior potential (alpha) and the electrode voltages (beta), stored
with the spatial index outer and the chaos index inner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .chaos import MomentMatrices
from .fem import SpatialMatrices

DIRECT_ORDER_LIMIT = 2_000_000


@dataclass(frozen=True)
class SgfemSystem:
    """Assembled Galerkin matrix with its size bookkeeping."""

    K: sp.csr_matrix
    n_nodes: int
    n_electrodes: int
    n_chaos: int
    a: np.ndarray
    b: np.ndarray

    @property
    def order(self) -> int:
        return (self.n_nodes + self.n_electrodes - 1) * self.n_chaos


@dataclass(frozen=True)
class SgfemSolution:
    """Chaos coefficients per current pattern, with solver diagnostics."""

    patterns: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    residuals: np.ndarray
    method: str

    def mean_voltages(self) -> np.ndarray:
        """Expected electrode voltages (the degree-0 chaos coefficients)."""
        return expand_mean_free(self.beta[:, :, 0])


def expand_mean_free(gamma: np.ndarray) -> np.ndarray:
    """Expand coefficients over v_i = e_1 - e_{i+1} into electrode values."""
    gamma = np.asarray(gamma, dtype=np.float64)
    out = np.empty(gamma.shape[:-1] + (gamma.shape[-1] + 1,))
    out[..., 0] = gamma.sum(axis=-1)
    out[..., 1:] = -gamma
    return out


def assemble_system(
    sm: SpatialMatrices, mm: MomentMatrices, a, b
) -> SgfemSystem:
    """Assemble the coupled Galerkin matrix.

    ``a``/``b`` are the per-electrode contact conductance bounds in mS/cm;
    the contact chaos matrices are Z_m = (a_m+b_m)/2 G_0 + (b_m-a_m)/2
    G_{L+m}.  Requires 0 < a_m <= b_m (equal bounds give a deterministic
    contact).  Kronecker factors stay sparse throughout.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n_pix, n_el = sm.n_pixels, sm.n_electrodes
    if a.shape != (n_el,) or b.shape != (n_el,):
        raise ValueError("need one contact bound pair per electrode")
    bad = np.flatnonzero((a <= 0.0) | (a > b))
    if bad.size:
        m = int(bad[0])
        raise ValueError(
            f"electrode {m + 1}: invalid contact bounds a={a[m]:g}, b={b[m]:g}"
        )
    if mm.n_dims != n_pix + n_el:
        raise ValueError(
            f"moment matrices cover {mm.n_dims} dimensions, "
            f"spatial data implies {n_pix + n_el}"
        )

    Z = [
        0.5 * (a[m] + b[m]) * mm[0] + 0.5 * (b[m] - a[m]) * mm[n_pix + m + 1]
        for m in range(n_el)
    ]

    delta = sp.kron(sm.A0, mm[0], format="csr")
    for l in range(n_pix):
        delta = delta + sp.kron(sm.A[l], mm[l + 1], format="csr")
    for m in range(n_el):
        delta = delta + sp.kron(sm.S[m], Z[m], format="csr")

    gcols = [sp.csr_matrix(g.reshape(-1, 1)) for g in sm.g]
    ups = sp.hstack(
        [
            sp.kron(gcols[i + 1], Z[i + 1], format="csr")
            - sp.kron(gcols[0], Z[0], format="csr")
            for i in range(n_el - 1)
        ],
        format="csr",
    )
    pi = sp.kron(
        np.ones((n_el - 1, n_el - 1)), sm.lengths[0] * Z[0], format="csr"
    ) + sp.block_diag(
        [sm.lengths[i + 1] * Z[i + 1] for i in range(n_el - 1)], format="csr"
    )

    K = sp.bmat([[delta, ups], [ups.T, pi]], format="csr")
    # enforce bitwise symmetry; summation order can differ across the
    # diagonal by a last-bit rounding otherwise
    K = (K + K.T) * 0.5
    return SgfemSystem(K.tocsr(), sm.n_nodes, n_el, mm[0].shape[0], a, b)


def rhs_for_current(system: SgfemSystem, currents) -> np.ndarray:
    """Load vector of one current pattern (mA), nonzero only at the
    degree-0 voltage coefficients: (c_i)_0 = I_1 - I_{i+1}."""
    currents = np.asarray(currents, dtype=np.float64)
    if currents.shape != (system.n_electrodes,):
        raise ValueError("need one current per electrode")
    if abs(currents.sum()) > 1e-12:
        raise ValueError(f"currents must sum to zero, got {currents.sum():g}")
    c = np.zeros(system.order)
    base = system.n_nodes * system.n_chaos
    c[base :: system.n_chaos] = currents[0] - currents[1:]
    return c


def _jacobi(K: sp.csr_matrix) -> spla.LinearOperator:
    d = K.diagonal()
    if (d <= 0.0).any():
        raise RuntimeError("nonpositive diagonal; system not positive definite")
    inv = 1.0 / d
    return spla.LinearOperator(K.shape, matvec=lambda x: inv * x)


def _ic0_factor(indptr, indices, kdata, shift):
    """Zero-fill incomplete Cholesky of tril(K) + shift*I, or None.

    Up-looking row variant restricted to the input sparsity.  Returns the
    factor values in the same CSR layout, or None on a nonpositive pivot.
    """
    n = indptr.shape[0] - 1
    ldata = np.zeros_like(kdata)
    for j in range(n):
        s, e = indptr[j], indptr[j + 1]
        w = kdata[s:e].copy()
        w[-1] += shift
        for t in range(e - s - 1):
            k = indices[s + t]
            ks, ke = indptr[k], indptr[k + 1]
            common, ia, ib = np.intersect1d(
                indices[s : s + t],
                indices[ks : ke - 1],
                assume_unique=True,
                return_indices=True,
            )
            dot = ldata[s + ia] @ ldata[ks + ib] if common.size else 0.0
            w[t] = (w[t] - dot) / ldata[ke - 1]
            w[-1] -= w[t] * w[t]
        if w[-1] <= 0.0:
            return None
        w[-1] = math.sqrt(w[-1])
        ldata[s:e] = w
    return ldata


def _ic0(K: sp.csr_matrix) -> spla.LinearOperator:
    """Zero-fill incomplete Cholesky preconditioner (symmetric ILU0).

    Works on the symmetrically scaled matrix D^-1/2 K D^-1/2 (the raw
    diagonal spans several orders of magnitude between interior and
    electrode-coupled rows); breakdown is handled by the usual diagonal
    compensation, retrying with a growing shift.
    """
    d = K.diagonal()
    if (d <= 0.0).any():
        raise RuntimeError("nonpositive diagonal; system not positive definite")
    root = np.sqrt(d)
    inv_root = 1.0 / root
    scaled = sp.diags(inv_root) @ K @ sp.diags(inv_root)
    low = sp.tril(scaled, format="csr")
    low.sort_indices()
    indptr, indices, kdata = low.indptr, low.indices, low.data
    shift = 0.0
    for _ in range(14):
        ldata = _ic0_factor(indptr, indices, kdata, shift)
        if ldata is not None:
            break
        shift = 2.0 * shift if shift else 1e-3
    else:
        raise RuntimeError(
            "incomplete factorization broke down; system not positive definite"
        )
    L = sp.csr_matrix((ldata, indices, indptr), shape=low.shape)
    # exact triangular solves via LU with natural ordering (no extra fill)
    lo = spla.splu(L.tocsc(), permc_spec="NATURAL", diag_pivot_thresh=0.0)
    up = spla.splu(L.T.tocsc(), permc_spec="NATURAL", diag_pivot_thresh=0.0)

    def apply(x):
        return inv_root * up.solve(lo.solve(inv_root * x))

    return spla.LinearOperator(K.shape, matvec=apply)


def solve(
    system: SgfemSystem,
    patterns,
    method: str = "auto",
    tol: float = 1e-10,
    precond: str = "jacobi",
    maxiter: int | None = None,
) -> SgfemSolution:
    """Solve the Galerkin system for a batch of current patterns.

    ``method`` is ``direct`` (sparse LU, one factorization shared by all
    patterns, with iterative refinement down to ``tol``), ``pcg``
    (conjugate gradients, ``jacobi`` or ``ilu`` preconditioner), or
    ``auto`` which picks direct up to DIRECT_ORDER_LIMIT unknowns.  Raises
    if any relative residual stays above ``tol``.
    """
    patterns = np.atleast_2d(np.asarray(patterns, dtype=np.float64))
    K = system.K
    n_d, n_el, n_g = system.n_nodes, system.n_electrodes, system.n_chaos
    if method == "auto":
        method = "direct" if system.order <= DIRECT_ORDER_LIMIT else "pcg"
    if method not in ("direct", "pcg"):
        raise ValueError(f"unknown solver method {method!r}")

    if method == "direct":
        try:
            lu = spla.splu(K.tocsc())
        except RuntimeError as exc:
            raise RuntimeError(
                "factorization failed; system not positive definite "
                f"({exc})"
            ) from exc
    else:
        if precond == "jacobi":
            prec = _jacobi(K)
        elif precond == "ilu":
            prec = _ic0(K)
        else:
            raise ValueError(f"unknown preconditioner {precond!r}")

    alpha = np.empty((patterns.shape[0], n_d, n_g))
    beta = np.empty((patterns.shape[0], n_el - 1, n_g))
    residuals = np.empty(patterns.shape[0])
    for p, pattern in enumerate(patterns):
        c = rhs_for_current(system, pattern)
        cnorm = np.linalg.norm(c)
        if method == "direct":
            x = lu.solve(c)
            for _ in range(3):
                r = c - K @ x
                if np.linalg.norm(r) <= tol * cnorm:
                    break
                x = x + lu.solve(r)
        else:
            x, info = spla.cg(K, c, rtol=tol, atol=0.0, M=prec, maxiter=maxiter)
            if info != 0:
                raise RuntimeError(
                    f"PCG did not reach tolerance {tol:g} (info={info})"
                )
        rel = np.linalg.norm(c - K @ x) / cnorm
        if rel > tol:
            raise RuntimeError(
                f"pattern {p}: relative residual {rel:.3e} above {tol:g}"
            )
        residuals[p] = rel
        alpha[p] = x[: n_d * n_g].reshape(n_d, n_g)
        beta[p] = x[n_d * n_g :].reshape(n_el - 1, n_g)
    return SgfemSolution(patterns, alpha, beta, residuals, method)


def standard_patterns(n_electrodes: int, amplitude: float = 1.0) -> np.ndarray:
    """The M-1 patterns I^m = amplitude * (e_1 - e_{m+1}), m = 1..M-1."""
    pats = np.zeros((n_electrodes - 1, n_electrodes))
    pats[:, 0] = amplitude
    pats[np.arange(n_electrodes - 1), np.arange(1, n_electrodes)] = -amplitude
    return pats
