"""Piecewise-linear finite element matrices for the complete electrode model.

Assembles the conductivity stiffness matrices (one background matrix plus
one restriction per pixel) and, for every electrode, the boundary mass
matrix and boundary load vector that carry the contact terms.  Conductivity
is in mS, electrode lengths in cm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .geometry import ElectrodeGeometry, Mesh, PixelPartition, electrode_geometry


@dataclass(frozen=True)
class SpatialMatrices:
    """FEM building blocks of the electrode model on one mesh.

    Attributes
    ----------
    A0 : background stiffness, already scaled by sigma0.
    A : tuple of pixel-restricted stiffness matrices, scaled by sigma[l].
    S : tuple of electrode boundary mass matrices.
    g : tuple of electrode boundary load vectors (sum equals |E_m|).
    lengths : (M,) electrode lengths |E_m| in cm.
    """

    A0: sp.csr_matrix
    A: tuple[sp.csr_matrix, ...]
    S: tuple[sp.csr_matrix, ...]
    g: tuple[np.ndarray, ...]
    lengths: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.A0.shape[0]

    @property
    def n_pixels(self) -> int:
        return len(self.A)

    @property
    def n_electrodes(self) -> int:
        return len(self.S)


def stiffness_matrix(mesh: Mesh, coeff: np.ndarray) -> sp.csr_matrix:
    """Assemble int coeff grad(phi_i).grad(phi_j) with per-triangle coeff.

    Entries are exact for linear elements: each triangle contributes
    coeff * (b_i . b_j) / (4 area), where b_i are the edge-normal vectors
    opposite node i.  Structural zeros are kept so the sparsity pattern is
    exactly the node adjacency of the triangles with nonzero coefficient.
    """
    n = mesh.n_nodes
    tri = mesh.triangles
    keep = np.flatnonzero(coeff != 0.0)
    if keep.size == 0:
        return sp.csr_matrix((n, n))
    tri = tri[keep]
    c = coeff[keep]
    p = mesh.nodes[tri]
    b = np.empty((tri.shape[0], 3, 2))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        b[:, i, 0] = p[:, j, 1] - p[:, k, 1]
        b[:, i, 1] = p[:, k, 0] - p[:, j, 0]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    area2 = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    # area2 is twice the signed area; positivity was validated on load
    scale = c / (2.0 * area2)
    vals = np.einsum("tid,tjd->tij", b, b) * scale[:, None, None]
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    return sp.coo_matrix((vals.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def assemble_stiffness(
    mesh: Mesh, partition: PixelPartition, sigma0: float, sigma: np.ndarray
) -> tuple[sp.csr_matrix, tuple[sp.csr_matrix, ...]]:
    """Background and per-pixel stiffness matrices.

    ``A0`` is the global stiffness scaled by the background conductivity
    ``sigma0``; ``A[l]`` is the stiffness restricted to pixel l and scaled
    by the perturbation magnitude ``sigma[l]``.  Requires ``sigma0 > 0``
    and ``0 <= sigma[l] < sigma0`` so the total conductivity stays positive
    for every parameter value.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma0 <= 0.0:
        raise ValueError(f"sigma0 must be positive, got {sigma0:g}")
    bad = np.flatnonzero((sigma < 0.0) | (sigma >= sigma0))
    if bad.size:
        l = int(bad[0])
        raise ValueError(
            f"pixel {l}: sigma[{l}] = {sigma[l]:g} outside [0, sigma0 = {sigma0:g})"
        )
    if sigma.shape[0] != partition.n_pixels:
        raise ValueError("sigma length does not match the pixel count")
    owner = partition.triangle_pixel
    A0 = stiffness_matrix(mesh, np.full(mesh.n_triangles, sigma0))
    A = tuple(
        stiffness_matrix(mesh, np.where(owner == l, sigma[l], 0.0))
        for l in range(partition.n_pixels)
    )
    return A0, A


def assemble_electrode_mass(
    mesh: Mesh, eg: ElectrodeGeometry | None = None
) -> tuple[tuple[sp.csr_matrix, ...], tuple[np.ndarray, ...]]:
    """Boundary mass matrix S_m and load vector g_m for every electrode.

    On an edge of length h the local mass is h/6 * [[2, 1], [1, 2]] and the
    local load is h/2 * [1, 1]; hence sum(g_m) = |E_m| and the total mass
    of S_m equals |E_m|.
    """
    if eg is None:
        eg = electrode_geometry(mesh)
    n = mesh.n_nodes
    S, g = [], []
    for run in eg.edges:
        ab = mesh.boundary_edges[run]
        vec = mesh.nodes[ab[:, 1]] - mesh.nodes[ab[:, 0]]
        h = np.hypot(vec[:, 0], vec[:, 1])
        rows = np.repeat(ab, 2, axis=1).ravel()
        cols = np.tile(ab, (1, 2)).ravel()
        vals = (h[:, None] * np.array([2.0, 1.0, 1.0, 2.0]) / 6.0).ravel()
        S.append(sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr())
        gm = np.zeros(n)
        np.add.at(gm, ab.ravel(), np.repeat(h / 2.0, 2))
        g.append(gm)
    return tuple(S), tuple(g)


def assemble_spatial(
    mesh: Mesh, partition: PixelPartition, sigma0: float, sigma: np.ndarray
) -> SpatialMatrices:
    """Bundle all FEM matrices of one mesh/partition/conductivity setup."""
    eg = electrode_geometry(mesh)
    A0, A = assemble_stiffness(mesh, partition, sigma0, sigma)
    S, g = assemble_electrode_mass(mesh, eg)
    return SpatialMatrices(A0, A, S, g, eg.lengths.copy())
