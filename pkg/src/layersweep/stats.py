"""Rank statistics and similarity primitives.

Spearman correlation is computed as the Pearson correlation of tie-averaged
ranks. The default p-value is the two-sided asymptotic t-approximation; an
exact-style permutation p-value is available for small samples.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import stdtr

from .errors import (
    NonFiniteError,
    ParameterError,
    ShapeError,
    UndefinedCorrelationError,
    ZeroNormWarning,
)

_TINY_P = float(np.finfo(np.float64).tiny)


@dataclass(frozen=True)
class CorrelationResult:
    rho: float
    n: int
    p_value: float
    method: str  # "asymptotic" | "permutation"


def rank_average_ties(v: np.ndarray) -> np.ndarray:
    """Ranks 1..n with tied values receiving the average rank of their block."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ShapeError("rank_average_ties expects a 1-D vector")
    if not np.isfinite(v).all():
        raise NonFiniteError("cannot rank a vector with NaN or infinity")
    n = v.size
    order = np.argsort(v, kind="stable")
    sorted_v = v[order]
    ranks = np.empty(n, dtype=np.float64)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and sorted_v[j + 1] == sorted_v[i]:
            j += 1
        # ranks i+1 .. j+1 (1-based) share the block average
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _centered_unit_ranks(v: np.ndarray) -> np.ndarray:
    r = rank_average_ties(v)
    r -= r.mean()
    norm = np.sqrt((r * r).sum())
    if norm == 0.0:
        raise UndefinedCorrelationError("constant vector has no rank ordering")
    return r / norm


def _unit_rank_rho(ux: np.ndarray, uy: np.ndarray) -> float:
    # perfectly concordant or anti-concordant ranks correlate at exactly +/-1,
    # but the dot product can land an ulp inside; resolve those cases exactly
    if np.array_equal(ux, uy):
        return 1.0
    if np.array_equal(ux, -uy):
        return -1.0
    return float(np.clip(ux @ uy, -1.0, 1.0))


def _asymptotic_p(rho: float, n: int) -> float:
    if abs(rho) >= 1.0:
        return _TINY_P
    t = abs(rho) * np.sqrt((n - 2) / (1.0 - rho * rho))
    p = 2.0 * float(stdtr(n - 2, -t))
    return min(1.0, max(p, _TINY_P))


def _check_pair(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1:
        raise ShapeError("correlation expects 1-D vectors")
    if x.size != y.size:
        raise ShapeError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 3:
        raise ParameterError(f"need at least 3 samples, got {x.size}")
    return x, y


def spearman(x: np.ndarray, y: np.ndarray) -> CorrelationResult:
    """Tie-aware Spearman correlation with the asymptotic t p-value."""
    x, y = _check_pair(x, y)
    rx = _centered_unit_ranks(x)
    ry = _centered_unit_ranks(y)
    rho = _unit_rank_rho(rx, ry)
    return CorrelationResult(rho=rho, n=x.size, p_value=_asymptotic_p(rho, x.size), method="asymptotic")


def spearman_permutation_p(
    x: np.ndarray, y: np.ndarray, n_perm: int = 1000, seed: int = 0
) -> CorrelationResult:
    """Two-sided permutation p-value: (1 + #{|rho_perm| >= |rho_obs|}) / (n_perm + 1).

    Each replicate draws from its own (seed, replicate-index) substream, so the
    count is independent of evaluation order.
    """
    if n_perm < 1:
        raise ParameterError(f"n_perm must be >= 1, got {n_perm}")
    x, y = _check_pair(x, y)
    rx = _centered_unit_ranks(x)
    ry = _centered_unit_ranks(y)
    rho = _unit_rank_rho(rx, ry)
    threshold = abs(rho)
    root = np.random.SeedSequence(seed)
    hits = 0
    for child in root.spawn(n_perm):
        rng = np.random.default_rng(child)
        perm = rng.permutation(x.size)
        if abs(_unit_rank_rho(rx, ry[perm])) >= threshold:
            hits += 1
    p = (1 + hits) / (n_perm + 1)
    return CorrelationResult(rho=rho, n=x.size, p_value=p, method="permutation")


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """<a,b> / (|a||b|); zero-norm inputs yield 0 with a warning."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError(f"cosine_similarity expects equal-length vectors, got {a.shape} and {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        warnings.warn("zero-norm vector in cosine_similarity", ZeroNormWarning, stacklevel=2)
        return 0.0
    return float(np.clip((a @ b) / (na * nb), -1.0, 1.0))
