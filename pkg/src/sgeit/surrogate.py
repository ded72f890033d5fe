"""Polynomial voltage surrogates: evaluation, Jacobians and file storage.

A surrogate holds the voltage chaos coefficients of a Galerkin solve for a
batch of current patterns, together with everything needed to reuse it:
parametrization bounds, pixel seeds, current patterns and the multi-index
set.  Evaluation sums beta_{i,mu} Psi_mu(y) over the mean-free voltage
basis, where Psi is the chaos basis orthonormal under the uniform
distribution on the parameter cube, so the degree-0 coefficients are the
expected voltages.

File format ``SGFEM-EIT/1``: a magic line, an 8-byte little-endian header
length, a JSON header {M, L, Q, sigma0, sigma, a, b, seeds, patterns,
index_set}, then the coefficients as little-endian float64, pattern-major.
"""

from __future__ import annotations

import json
import math
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from .chaos import ChaosBasis, MultiIndexSet
from .sgfem import SgfemSolution

MAGIC_PREFIX = b"SGFEM-EIT/"
FORMAT_VERSION = "1"


@dataclass
class SgfemSurrogate:
    """Voltage surrogate over the parameter cube [-1, 1]^(L+M)."""

    index_set: MultiIndexSet
    patterns: np.ndarray
    beta: np.ndarray
    sigma0: float
    sigma: np.ndarray
    a: np.ndarray
    b: np.ndarray
    seeds: np.ndarray
    _basis: ChaosBasis = field(init=False, repr=False)
    _flat_beta: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.patterns = np.atleast_2d(np.asarray(self.patterns, dtype=np.float64))
        self.beta = np.asarray(self.beta, dtype=np.float64)
        self.sigma = np.asarray(self.sigma, dtype=np.float64)
        self.a = np.asarray(self.a, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        self.seeds = np.asarray(self.seeds, dtype=np.float64).reshape(-1, 2)
        m = self.patterns.shape[1]
        expected = (self.patterns.shape[0], m - 1, len(self.index_set))
        if self.beta.shape != expected:
            raise ValueError(
                f"coefficient array has shape {self.beta.shape}, expected {expected}"
            )
        if self.index_set.n_dims != self.n_pixels + m:
            raise ValueError(
                "index set dimension does not match pixel and electrode counts"
            )
        self._basis = ChaosBasis(self.index_set)
        self._flat_beta = np.ascontiguousarray(
            self.beta.reshape(-1, len(self.index_set))
        )

    @property
    def n_electrodes(self) -> int:
        return self.patterns.shape[1]

    @property
    def n_pixels(self) -> int:
        return self.sigma.shape[0]

    @property
    def n_patterns(self) -> int:
        return self.patterns.shape[0]

    @property
    def n_params(self) -> int:
        return self.index_set.n_dims

    def _check_point(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {y.shape}")
        if np.abs(y).max() > 1.0 + 1e-12:
            warnings.warn(
                "parameter point outside [-1, 1]; polynomial extrapolation",
                stacklevel=3,
            )
        return y

    def eval_voltage(self, pattern_index: int, y) -> np.ndarray:
        """Electrode voltages of pattern ``pattern_index`` (1-based)."""
        if not 1 <= pattern_index <= self.n_patterns:
            raise ValueError(
                f"pattern_index must be in 1..{self.n_patterns}, got {pattern_index}"
            )
        y = self._check_point(y)
        psi = self._basis.eval(y)
        gamma = self.beta[pattern_index - 1] @ psi
        out = np.empty(self.n_electrodes)
        out[0] = gamma.sum()
        out[1:] = -gamma
        return out

    def eval_stacked(self, y) -> np.ndarray:
        """All patterns' voltages stacked into one vector, pattern-major."""
        y = self._check_point(y)
        psi = self._basis.eval(y)
        gamma = (self._flat_beta @ psi).reshape(self.n_patterns, -1)
        out = np.empty((self.n_patterns, self.n_electrodes))
        out[:, 0] = gamma.sum(axis=1)
        out[:, 1:] = -gamma
        return out.ravel()

    def jacobian(self, y) -> np.ndarray:
        """Derivative of the stacked voltages with respect to y."""
        y = self._check_point(y)
        _, jpsi = self._basis.eval_with_jacobian(y)
        dgamma = (self._flat_beta @ jpsi).reshape(
            self.n_patterns, self.n_electrodes - 1, self.n_params
        )
        out = np.empty((self.n_patterns, self.n_electrodes, self.n_params))
        out[:, 0] = dgamma.sum(axis=1)
        out[:, 1:] = -dgamma
        return out.reshape(-1, self.n_params)

    def save(self, path) -> None:
        """Write the surrogate in the versioned binary format."""
        header = {
            "M": self.n_electrodes,
            "L": self.n_pixels,
            "Q": self.index_set.degree,
            "sigma0": float(self.sigma0),
            "sigma": self.sigma.tolist(),
            "a": self.a.tolist(),
            "b": self.b.tolist(),
            "seeds": self.seeds.tolist(),
            "patterns": self.patterns.tolist(),
            "index_set": self.index_set.indices.tolist(),
        }
        blob = json.dumps(header, separators=(",", ":")).encode()
        with open(path, "wb") as f:
            f.write(MAGIC_PREFIX + FORMAT_VERSION.encode() + b"\n")
            f.write(struct.pack("<Q", len(blob)))
            f.write(blob)
            f.write(np.ascontiguousarray(self.beta, dtype="<f8").tobytes())


def from_solution(
    solution: SgfemSolution,
    index_set: MultiIndexSet,
    sigma0: float,
    sigma,
    a,
    b,
    seeds,
) -> SgfemSurrogate:
    """Package a Galerkin solution as a reusable surrogate."""
    return SgfemSurrogate(
        index_set,
        solution.patterns,
        solution.beta,
        sigma0,
        np.asarray(sigma, dtype=np.float64),
        np.asarray(a, dtype=np.float64),
        np.asarray(b, dtype=np.float64),
        np.asarray(seeds, dtype=np.float64),
    )


def load(path) -> SgfemSurrogate:
    """Read a surrogate file, rejecting unknown versions and size lies."""
    with open(path, "rb") as f:
        line = f.readline()
        if not line.startswith(MAGIC_PREFIX):
            raise ValueError(f"{path}: not a surrogate file")
        version = line[len(MAGIC_PREFIX) :].strip().decode(errors="replace")
        if version != FORMAT_VERSION:
            raise ValueError(
                f"{path}: unsupported format version {version!r} "
                f"(supported: {FORMAT_VERSION})"
            )
        (hlen,) = struct.unpack("<Q", f.read(8))
        try:
            header = json.loads(f.read(hlen).decode())
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ValueError(f"{path}: corrupt header ({exc})") from exc
        payload = f.read()
    try:
        m, big_l, q = int(header["M"]), int(header["L"]), int(header["Q"])
        indices = np.asarray(header["index_set"], dtype=np.int64)
        patterns = np.asarray(header["patterns"], dtype=np.float64)
        sigma = np.asarray(header["sigma"], dtype=np.float64)
        a = np.asarray(header["a"], dtype=np.float64)
        b = np.asarray(header["b"], dtype=np.float64)
        seeds = np.asarray(header["seeds"], dtype=np.float64)
        sigma0 = float(header["sigma0"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{path}: malformed header ({exc})") from exc
    n_dims = big_l + m
    expected_card = math.comb(n_dims + q, q)
    if indices.ndim != 2 or indices.shape != (expected_card, n_dims):
        raise ValueError(
            f"{path}: index set cardinality {indices.shape} does not match "
            f"the total-degree count {expected_card} for L+M={n_dims}, Q={q}"
        )
    index_set = MultiIndexSet(n_dims, q, indices)
    n_values = patterns.shape[0] * (m - 1) * expected_card
    if len(payload) != 8 * n_values:
        raise ValueError(
            f"{path}: payload holds {len(payload)} bytes, expected {8 * n_values}"
        )
    beta = np.frombuffer(payload, dtype="<f8").reshape(
        patterns.shape[0], m - 1, expected_card
    )
    return SgfemSurrogate(
        index_set, patterns, beta.copy(), sigma0, sigma, a, b, seeds
    )
