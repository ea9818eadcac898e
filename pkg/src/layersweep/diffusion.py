"""Diffusion-map spectral decomposition and diffusion pseudotime.

Pipeline: symmetric neighbor graph -> adaptive Gaussian kernel with per-node
bandwidths -> density normalization -> row-stochastic transition operator ->
top eigenpairs via the symmetric conjugate -> pseudotime as the spectrally
weighted distance to a root cell.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .container import CellAnnotations
from .errors import (
    ComputationError,
    ConfigurationError,
    ConnectivityError,
    DegenerateSpectrumError,
    ParameterError,
    SpectrumWarning,
)
from .neighbors import NeighborGraph

DEFAULT_N_COMPONENTS = 10
DENSE_EIG_THRESHOLD = 2000
_SIGMA_FLOOR = 1e-12
_UNIT_EIGENVALUE_TOL = 1e-10


@dataclass
class DiffusionOperator:
    """Density-normalized kernel plus (after decomposition) its eigenpairs.

    `kernel` is the symmetric nonnegative matrix K'; the row-stochastic
    transition matrix is T = diag(1/degree) @ K' and is never materialized
    densely except for small inputs.
    """

    n: int
    kernel: sp.csr_matrix
    degree: np.ndarray
    eigenvalues: np.ndarray | None = None
    eigenvectors: np.ndarray | None = None  # right eigenvectors of T, columns

    def transition_dense(self) -> np.ndarray:
        return self.kernel.toarray() / self.degree[:, None]

    def transition_matvec(self, x: np.ndarray) -> np.ndarray:
        return (self.kernel @ x) / self.degree


def _bandwidths(g: NeighborGraph) -> np.ndarray:
    """Per-node sigma: distance to the ceil(k/2)-th neighbor, floored."""
    half = max(1, math.ceil(g.k / 2))
    sigma = np.empty(g.n, dtype=np.float64)
    for i in range(g.n):
        _, d = g.neighbors(i)
        if d.size == 0:
            sigma[i] = _SIGMA_FLOOR
            continue
        sigma[i] = d[min(half, d.size) - 1]
    return np.maximum(sigma, _SIGMA_FLOOR)


def transition_operator(
    g: NeighborGraph, kernel: str = "gauss", alpha: float = 1.0
) -> DiffusionOperator:
    """Build the density-normalized transition operator from a symmetric graph."""
    if not g.symmetric:
        raise ParameterError("transition_operator requires a symmetrized graph")
    if kernel not in ("gauss", "binary"):
        raise ParameterError(f"unknown kernel {kernel!r}")

    src, dst, dist = g.edge_arrays()
    degrees = np.diff(g.indptr)
    if (degrees == 0).any():
        node = int(np.flatnonzero(degrees == 0)[0])
        raise ConnectivityError(f"node {node} has no edges; graph is not connected")

    if kernel == "gauss":
        sigma = _bandwidths(g)
        weights = np.exp(-(dist * dist) / (sigma[src] * sigma[dst]))
    else:
        weights = np.ones_like(dist)

    K = sp.csr_matrix((weights, (src, dst)), shape=(g.n, g.n))
    K.sum_duplicates()
    q = np.asarray(K.sum(axis=1)).ravel()
    if (q <= 0).any():
        node = int(np.flatnonzero(q <= 0)[0])
        raise ConnectivityError(f"node {node} has zero kernel row sum")
    if alpha != 0.0:
        scale = q ** (-alpha)
        K = sp.csr_matrix(K.multiply(scale[:, None]).multiply(scale[None, :]))
    d = np.asarray(K.sum(axis=1)).ravel()
    return DiffusionOperator(n=g.n, kernel=K, degree=d)


def spectral_decompose(
    op: DiffusionOperator,
    m: int = DEFAULT_N_COMPONENTS,
    dense_threshold: int = DENSE_EIG_THRESHOLD,
    tol: float = 1e-10,
) -> DiffusionOperator:
    """Top-m eigenpairs of T via the symmetric conjugate S = D^1/2 T D^-1/2.

    Dense symmetric decomposition up to `dense_threshold` nodes, implicitly
    restarted Lanczos above it. Eigenvectors are back-transformed to right
    eigenvectors of T, unit-normalized, first nonzero entry positive.
    """
    if m < 1:
        raise ParameterError(f"need at least one component, got m={m}")
    n = op.n
    d_inv_sqrt = 1.0 / np.sqrt(op.degree)
    S = sp.csr_matrix(op.kernel.multiply(d_inv_sqrt[:, None]).multiply(d_inv_sqrt[None, :]))

    m_eff = min(m, n)
    if n <= dense_threshold or m_eff >= n - 1:
        dense = S.toarray()
        dense = 0.5 * (dense + dense.T)
        vals, vecs = scipy.linalg.eigh(dense, subset_by_index=[n - m_eff, n - 1])
        vals = vals[::-1]
        vecs = vecs[:, ::-1]
    else:
        v0 = np.full(n, 1.0 / np.sqrt(n))
        vals, vecs = spla.eigsh(S, k=m_eff, which="LA", v0=v0, tol=tol, maxiter=5 * m_eff * n)
        order = np.argsort(vals)[::-1]
        vals = vals[order]
        vecs = vecs[:, order]

    n_unit = int((vals > 1.0 - _UNIT_EIGENVALUE_TOL).sum())
    if n_unit > 1:
        raise ConnectivityError(
            f"eigenvalue 1 has multiplicity {n_unit}: graph is disconnected, "
            "diffusion distances are undefined across components"
        )
    if abs(vals[0] - 1.0) > 1e-8:
        raise ComputationError(f"leading eigenvalue {vals[0]!r} is not 1 within 1e-8")

    psi = vecs * d_inv_sqrt[:, None]
    norms = np.linalg.norm(psi, axis=0)
    psi /= norms
    for j in range(psi.shape[1]):
        col = psi[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12 * np.abs(col).max())
        if nz.size and col[nz[0]] < 0:
            psi[:, j] = -col
    return replace(op, eigenvalues=vals, eigenvectors=psi)


@dataclass
class PseudotimeResult:
    root: int
    dpt: np.ndarray  # min-max normalized to [0, 1]
    n_components: int


def dpt_distances(op: DiffusionOperator, root: int) -> PseudotimeResult:
    """Diffusion pseudotime from a root cell.

    dpt(root, y)^2 = sum_i (lambda_i / (1 - lambda_i))^2 (psi_i(root) - psi_i(y))^2
    over the non-trivial components, then min-max normalized to [0, 1].
    """
    if op.eigenvalues is None or op.eigenvectors is None:
        raise ParameterError("run spectral_decompose before dpt_distances")
    if not (0 <= root < op.n):
        raise ParameterError(f"root index {root} out of range for n={op.n}")
    vals = op.eigenvalues
    usable = vals <= 1.0 - _UNIT_EIGENVALUE_TOL
    n_excluded = int((~usable).sum())
    if n_excluded > 1:
        warnings.warn(
            f"excluded {n_excluded} near-unit eigenvalues from pseudotime",
            SpectrumWarning,
            stacklevel=2,
        )
    if int(usable.sum()) < 1:
        raise DegenerateSpectrumError("no usable diffusion components below eigenvalue 1")

    lam = vals[usable]
    psi = op.eigenvectors[:, usable]
    weights = lam / (1.0 - lam)
    diff = (psi - psi[root]) * weights
    dpt = np.sqrt((diff * diff).sum(axis=1))
    top = dpt.max()
    if top <= 0.0:
        raise DegenerateSpectrumError("all diffusion distances are zero")
    dpt /= top
    return PseudotimeResult(root=root, dpt=dpt, n_components=int(usable.sum()))


def pick_root(ann: CellAnnotations) -> int:
    """Explicit root cell if annotated, else the cell with minimal reference pseudotime."""
    idx = ann.root_index()
    if idx is not None:
        return idx
    if ann.reference_pseudotime is not None:
        pt = ann.reference_pseudotime
        finite = np.isfinite(pt)
        if not finite.any():
            raise ConfigurationError("reference pseudotime has no finite values")
        masked = np.where(finite, pt, np.inf)
        return int(np.argmin(masked))
    raise ConfigurationError("annotations provide neither a root cell nor reference pseudotime")


def dump_dpt_csv(ann: CellAnnotations, result: PseudotimeResult, path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["cell_id", "dpt"])
        for cid, value in zip(ann.cell_ids, result.dpt.tolist()):
            w.writerow([cid, repr(value)])
