import numpy as np
import pytest

import sgeit
from sgeit import chaos, det_cem, fem, sgfem, surrogate


def two_ring_layout():
    # 4 seeds at r=0.35 rotated half a sector, 8 at r=0.75 on the axes
    inner_t = 2.0 * np.pi * (np.arange(4) + 0.5) / 4
    outer_t = 2.0 * np.pi * np.arange(8) / 8
    inner = 0.35 * np.column_stack([np.cos(inner_t), np.sin(inner_t)])
    outer = 0.75 * np.column_stack([np.cos(outer_t), np.sin(outer_t)])
    return np.vstack([inner, outer])


@pytest.fixture(scope="session")
def disk_seeds():
    return two_ring_layout()


@pytest.fixture(scope="session")
def tiny():
    """Small end-to-end setup: 4 electrodes, 3 pixels, 37 nodes."""
    mesh = sgeit.make_disk_fixture(3, 12, 4, 0.5)
    seeds = np.array([[0.0, 0.0], [0.55, 0.0], [-0.55, 0.0]])
    part = sgeit.assign_pixels(mesh, seeds)
    return mesh, part, seeds


@pytest.fixture(scope="session")
def tiny_surrogate(tiny):
    mesh, part, seeds = tiny
    L, M = part.n_pixels, mesh.n_electrodes
    sigma0 = 1.1
    sigma = np.full(L, 0.6)
    a = np.full(M, 100.0)
    b = np.full(M, 1000.0)
    spatial = fem.assemble_spatial(mesh, part, sigma0, sigma)
    index_set = chaos.iso_td(L + M, 2)
    moments = chaos.moment_matrices(index_set)
    system = sgfem.assemble_system(spatial, moments, a, b)
    patterns = sgfem.standard_patterns(M)
    solution = sgfem.solve(system, patterns)
    return surrogate.from_solution(
        solution, index_set, sigma0, sigma, a, b, seeds
    )


@pytest.fixture(scope="session")
def tiny_measurements(tiny):
    mesh, part, seeds = tiny
    sample = det_cem.DeterministicSample(
        np.array([1.1, 0.7, 1.3]), np.full(4, 400.0)
    )
    patterns = sgfem.standard_patterns(4)
    return det_cem.simulate_measurements(
        mesh, part, sample, patterns, noise_pct=1.0, seed=11
    )
