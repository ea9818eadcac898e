"""Exact cosine k-nearest-neighbor graphs.

Brute-force with blocked distance computation: at desk scale exactness is
affordable and removes approximate-NN nondeterminism. Ties are broken by
ascending neighbor index everywhere.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ParameterError, ShapeError, ZeroNormWarning

DEFAULT_K = 15
_DEFAULT_BLOCK = 1024


@dataclass
class NeighborGraph:
    """CSR-style adjacency; per-node lists sorted by (distance, index)."""

    n: int
    k: int
    indptr: np.ndarray
    indices: np.ndarray
    distances: np.ndarray
    symmetric: bool = False
    zero_norm_rows: int = 0

    def neighbors(self, node: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.indptr[node], self.indptr[node + 1]
        return self.indices[lo:hi], self.distances[lo:hi]

    def degree(self, node: int) -> int:
        return int(self.indptr[node + 1] - self.indptr[node])

    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        src = np.repeat(np.arange(self.n), np.diff(self.indptr))
        return src, self.indices, self.distances


def _normalize_rows(X: np.ndarray) -> tuple[np.ndarray, int]:
    """Unit-normalize rows in float64; zero-norm rows become zero vectors."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError("expected a 2-D matrix")
    norms = np.linalg.norm(X, axis=1)
    zero = norms == 0.0
    n_zero = int(zero.sum())
    safe = np.where(zero, 1.0, norms)
    return X / safe[:, None], n_zero


def cosine_distance_block(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Pairwise cosine distances 1 - <x,y>/(|x||y|), clipped to [0, 2].

    Zero-norm rows are treated as similarity 0 (distance 1) and counted via a
    ZeroNormWarning.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim != 2 or Y.ndim != 2:
        raise ShapeError("cosine_distance_block expects matrices")
    if X.shape[1] != Y.shape[1]:
        raise ShapeError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    if X.shape[1] < 1:
        raise ShapeError("need at least one feature dimension")
    Xn, zx = _normalize_rows(X)
    Yn, zy = _normalize_rows(Y)
    if zx + zy:
        warnings.warn(
            f"{zx + zy} zero-norm rows treated as distance 1", ZeroNormWarning, stacklevel=2
        )
    D = 1.0 - Xn @ Yn.T
    np.clip(D, 0.0, 2.0, out=D)
    return D


def knn_graph(X: np.ndarray, k: int = DEFAULT_K, block_size: int = _DEFAULT_BLOCK) -> NeighborGraph:
    """Exact k nearest neighbors per row under cosine distance, self excluded."""
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[1] < 1:
        raise ShapeError("knn_graph expects an n x d matrix with d >= 1")
    n = X.shape[0]
    if k < 1 or n <= k:
        raise ParameterError(f"need n > k >= 1, got n={n}, k={k}")
    if block_size < 1:
        raise ParameterError("block_size must be positive")

    Xn, n_zero = _normalize_rows(X)
    if n_zero:
        warnings.warn(
            f"{n_zero} zero-norm embedding rows treated as distance 1 to everything",
            ZeroNormWarning,
            stacklevel=2,
        )
    indices = np.empty((n, k), dtype=np.int64)
    dists = np.empty((n, k), dtype=np.float64)
    for start in range(0, n, block_size):
        stop = min(start + block_size, n)
        D = 1.0 - Xn[start:stop] @ Xn.T
        np.clip(D, 0.0, 2.0, out=D)
        D[np.arange(stop - start), np.arange(start, stop)] = np.inf
        # stable sort keeps equal distances in ascending-index order
        order = np.argsort(D, axis=1, kind="stable")[:, :k]
        indices[start:stop] = order
        dists[start:stop] = np.take_along_axis(D, order, axis=1)

    return NeighborGraph(
        n=n,
        k=k,
        indptr=np.arange(0, n * k + 1, k, dtype=np.int64),
        indices=indices.reshape(-1),
        distances=dists.reshape(-1),
        symmetric=False,
        zero_norm_rows=n_zero,
    )


def symmetrize(g: NeighborGraph, mode: str = "union") -> NeighborGraph:
    """Make the edge set symmetric: union g | g^T (default) or mutual g & g^T."""
    if mode not in ("union", "mutual"):
        raise ParameterError(f"unknown symmetrize mode {mode!r}")
    if g.symmetric:
        return g
    src, dst, w = g.edge_arrays()
    r = np.concatenate([src, dst])
    c = np.concatenate([dst, src])
    d = np.concatenate([w, w])
    order = np.lexsort((d, c, r))
    r, c, d = r[order], c[order], d[order]
    first = np.ones(r.size, dtype=bool)
    first[1:] = (r[1:] != r[:-1]) | (c[1:] != c[:-1])
    if mode == "union":
        r, c, d = r[first], c[first], d[first]
    else:
        # a directed edge appears twice in the doubled list iff its reverse exists too
        starts = np.flatnonzero(first)
        counts = np.diff(np.append(starts, r.size))
        keep = starts[counts >= 2]
        r, c, d = r[keep], c[keep], d[keep]
    order = np.lexsort((c, d, r))
    r, c, d = r[order], c[order], d[order]
    indptr = np.zeros(g.n + 1, dtype=np.int64)
    np.cumsum(np.bincount(r, minlength=g.n), out=indptr[1:])
    return replace(g, indptr=indptr, indices=c, distances=d, symmetric=True)


def dump_graph_csv(g: NeighborGraph, path: str | Path) -> None:
    """Debug dump: one src,dst,distance row per directed edge."""
    src, dst, w = g.edge_arrays()
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["src", "dst", "distance"])
        for s, t, x in zip(src.tolist(), dst.tolist(), w.tolist()):
            writer.writerow([s, t, repr(x)])
