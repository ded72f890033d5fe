"""Legendre chaos bases on the parameter cube [-1, 1]^P.

Provides the orthonormal univariate Legendre family, isotropic
total-degree multi-index sets, and the sparse moment matrices
G_k[mu, mu'] = E[y_k Psi_mu Psi_mu'] that couple the stochastic dimensions
in the Galerkin system.  ``legendre_eval`` normalizes against plain
Lebesgue measure on [-1, 1] (constant polynomial 1/sqrt(2)); the
multivariate basis used for evaluating surrogates is normalized against
the uniform probability measure instead (constant polynomial 1), which is
the scaling under which the Galerkin right-hand side carries the plain
current pattern.  Both share the same recurrence, so the moment matrices
are identical either way.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


def _recurrence_coeff(m: int) -> float:
    # y p_m = c_{m+1} p_{m+1} + c_m p_{m-1} for the orthonormal family
    return m / math.sqrt(4.0 * m * m - 1.0)


def _tables(max_degree: int, y: np.ndarray, const: float) -> tuple[np.ndarray, np.ndarray]:
    """Values and derivatives of the orthonormal family up to max_degree.

    ``const`` is the value of the degree-0 polynomial (1/sqrt(2) for the
    Lebesgue normalization, 1 for the uniform-probability normalization).
    """
    y = np.asarray(y, dtype=np.float64)
    vals = np.empty(y.shape + (max_degree + 1,))
    ders = np.zeros_like(vals)
    vals[..., 0] = const
    if max_degree >= 1:
        vals[..., 1] = math.sqrt(3.0) * const * y
        ders[..., 1] = math.sqrt(3.0) * const
    for m in range(1, max_degree):
        cm = _recurrence_coeff(m)
        cn = _recurrence_coeff(m + 1)
        vals[..., m + 1] = (y * vals[..., m] - cm * vals[..., m - 1]) / cn
        ders[..., m + 1] = (vals[..., m] + y * ders[..., m] - cm * ders[..., m - 1]) / cn
    return vals, ders


def legendre_eval(max_degree: int, y) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate the Legendre polynomials orthonormal on [-1, 1].

    Returns ``(values, derivatives)`` with trailing axis over degrees
    0..max_degree; the leading axes follow the shape of ``y``.  The family
    satisfies int_{-1}^{1} L_k L_l dy = delta_{kl}, so L_0 = 1/sqrt(2).
    """
    if max_degree < 0:
        raise ValueError("max_degree must be nonnegative")
    return _tables(max_degree, y, 1.0 / math.sqrt(2.0))


@dataclass(frozen=True)
class MultiIndexSet:
    """Multi-indices over P stochastic dimensions, graded ordering.

    ``indices`` has one row per multi-index; the all-zero index is first
    and rows are sorted by total degree, then by descending lexicographic
    order within each degree.
    """

    n_dims: int
    degree: int
    indices: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 2 or idx.shape[1] != self.n_dims:
            raise ValueError("indices must have one column per dimension")
        if idx.size and idx.min() < 0:
            raise ValueError("multi-indices must be nonnegative")
        if idx.size and idx.sum(axis=1).max() > self.degree:
            raise ValueError("multi-index exceeds the total degree bound")
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return self.indices.shape[0]

    def position(self) -> dict[tuple[int, ...], int]:
        """Row number of every multi-index, keyed by tuple."""
        return {tuple(mu): i for i, mu in enumerate(self.indices.tolist())}


def _composition_blocks(degree: int, n_dims: int) -> list[np.ndarray]:
    """Compositions of 0..degree into n_dims parts as one array per total.

    Grown one dimension at a time; prepending the new head in decreasing
    order keeps every block in descending lexicographic order.
    """
    blocks = [np.full((1, 1), d, dtype=np.int64) for d in range(degree + 1)]
    for _ in range(1, n_dims):
        blocks = [
            np.vstack(
                [
                    np.hstack(
                        [
                            np.full((blocks[d - h].shape[0], 1), h, dtype=np.int64),
                            blocks[d - h],
                        ]
                    )
                    for h in range(d, -1, -1)
                ]
            )
            for d in range(degree + 1)
        ]
    return blocks


def iso_td(n_dims: int, degree: int, size_cap: int = 10_000_000) -> MultiIndexSet:
    """Isotropic total-degree index set {mu : |mu| <= degree}.

    The cardinality is binomial(n_dims + degree, degree); construction is
    refused if it exceeds ``size_cap``.
    """
    if n_dims < 1:
        raise ValueError("need at least one dimension")
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    count = math.comb(n_dims + degree, degree)
    if count > size_cap:
        raise ValueError(
            f"index set would hold {count} indices, above the cap {size_cap}"
        )
    indices = np.vstack(_composition_blocks(degree, n_dims))
    return MultiIndexSet(n_dims, degree, indices)


@dataclass(frozen=True)
class MomentMatrices:
    """Sparse moment matrices G_0 = I and G_k = E[y_k Psi Psi'], k = 1..P."""

    G: tuple[sp.csr_matrix, ...]

    @property
    def n_dims(self) -> int:
        return len(self.G) - 1

    def __getitem__(self, k: int) -> sp.csr_matrix:
        return self.G[k]


def moment_matrices(index_set: MultiIndexSet) -> MomentMatrices:
    """Assemble G_0..G_P for one multi-index set.

    G_k couples indices differing by exactly one in dimension k; the entry
    between degrees m and m+1 is (m+1)/sqrt((2m+1)(2m+3)).  Every G_k is
    symmetric with zero diagonal except G_0, the identity.
    """
    n = len(index_set)
    pos = index_set.position()
    mats = [sp.identity(n, format="csr")]
    for k in range(index_set.n_dims):
        rows, cols, vals = [], [], []
        for i, mu in enumerate(index_set.indices):
            m = int(mu[k])
            if m == 0:
                continue
            nu = mu.copy()
            nu[k] = m - 1
            j = pos.get(tuple(nu.tolist()))
            if j is None:
                continue
            c = _recurrence_coeff(m)
            rows += [i, j]
            cols += [j, i]
            vals += [c, c]
        mats.append(
            sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        )
    return MomentMatrices(tuple(mats))


@dataclass
class ChaosBasis:
    """Product Legendre basis orthonormal under Uniform([-1, 1]^P).

    The constant polynomial is 1, so coefficients of an expansion are the
    physical quantities themselves at the distribution mean.  Evaluation
    exploits that a total-degree-Q index has at most Q active dimensions:
    each row stores Q (dimension, degree) slots, padded with the neutral
    degree-0 entry.
    """

    index_set: MultiIndexSet
    _slots: list[np.ndarray] = field(init=False, repr=False)

    def __post_init__(self):
        idx = self.index_set.indices
        q = self.index_set.degree
        n = len(self.index_set)
        width = self.index_set.degree + 1
        slots = []
        for s in range(q):
            flat = np.zeros(n, dtype=np.int64)
            dims = np.zeros(n, dtype=np.int64)
            degs = np.zeros(n, dtype=np.int64)
            for i in range(n):
                nz = np.flatnonzero(idx[i])
                if s < nz.size:
                    dims[i] = nz[s]
                    degs[i] = idx[i, nz[s]]
                    flat[i] = dims[i] * width + degs[i]
            slots.append((flat, dims, degs))
        self._slots = slots

    @property
    def n_dims(self) -> int:
        return self.index_set.n_dims

    def eval(self, y: np.ndarray) -> np.ndarray:
        """Values of all basis polynomials at one parameter point."""
        vals, _ = _tables(self.index_set.degree, y, 1.0)
        flat = vals.ravel()
        out = np.ones(len(self.index_set))
        for slot_flat, _, _ in self._slots:
            out *= flat[slot_flat]
        return out

    def eval_with_jacobian(self, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Values and per-dimension partial derivatives at one point."""
        vals, ders = _tables(self.index_set.degree, y, 1.0)
        fv, fd = vals.ravel(), ders.ravel()
        n = len(self.index_set)
        slot_vals = [fv[flat] for flat, _, _ in self._slots]
        slot_ders = [fd[flat] for flat, _, _ in self._slots]
        psi = np.ones(n)
        for v in slot_vals:
            psi *= v
        jac = np.zeros((n, self.n_dims))
        rows = np.arange(n)
        for s, (flat, dims, degs) in enumerate(self._slots):
            term = slot_ders[s].copy()
            for t in range(len(self._slots)):
                if t != s:
                    term *= slot_vals[t]
            np.add.at(jac, (rows, dims), term)
        return psi, jac
