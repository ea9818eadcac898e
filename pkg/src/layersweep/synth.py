"""Synthetic scenarios with planted ground truth, plus brute-force reference
implementations for the test suite.

The trajectory generator places cells on a smooth random curve indexed by a
latent time t and adds per-layer Gaussian noise, so the planted ordering is
recoverable exactly when noise is small and destroyed when it dominates. The
perturbation generator plants block-structured effect vectors that drive both
the Poisson counts and the embeddings, so DE-profile similarity and centroid
similarity share the same hidden structure.

The oracle_* functions are deliberately naive (full sorts, definitional
double loops, dense nonsymmetric eigendecomposition) and capped at small n;
they exist to cross-check the fast implementations, not to be fast.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.spatial.distance

from .container import CellAnnotations, CountMatrix, EmbeddingStack, make_cell_ids
from .errors import ParameterError, ShapeError
from .neighbors import NeighborGraph

ORACLE_MAX_N = 500
DEFAULT_CONTROL_LABEL = "non-targeting"


@dataclass(frozen=True)
class TrajectoryScenario:
    """Cells along a random degree-3 curve in R^dims, one layer per noise level.

    The curve is traversed at constant speed and rescaled to unit spread, so
    the noise sigmas are directly comparable across seeds: sigma is per
    coordinate, the whole curve has root-mean-square extent 1 around its
    center, and it sits on an offset `radius` away from the origin so cosine
    distances behave like local Euclidean ones.
    """

    n_cells: int = 500
    dims: int = 16
    noise_schedule: tuple[float, ...] = (0.0, 0.1, 1.0)
    radius: float = 3.0
    curve_scale: float = 1.0
    seed: int = 0

    @property
    def n_layers(self) -> int:
        return len(self.noise_schedule)


@dataclass(frozen=True)
class PerturbationScenario:
    """Block-structured perturbation effects driving counts and embeddings.

    Labels are grouped into effect blocks; a label's latent is its block
    axis plus jitter, mapped to gene space by a shared random matrix. Layers
    listed in scrambled_layers ignore the planted structure entirely and emit
    independent noise.
    """

    n_labels: int = 20
    n_cells_per_label: int = 300
    n_genes: int = 500
    n_blocks: int = 4
    n_layers: int = 2
    scrambled_layers: tuple[int, ...] = (2,)  # 1-based
    embed_dim: int = 128
    effect_scale: float = 1.0
    jitter: float = 0.5
    cell_noise: float = 0.5
    baseline: float = 5.0
    control: str = DEFAULT_CONTROL_LABEL
    seed: int = 0

    @property
    def labels(self) -> list[str]:
        width = max(2, len(str(self.n_labels - 1)))
        return [f"pert_{i:0{width}d}" for i in range(self.n_labels)]


_ARC_GRID = 4096


def _unit_angular_curve(
    t: np.ndarray, coeffs: np.ndarray, axis: np.ndarray, radius: float, scale: float
) -> np.ndarray:
    """Points on the offset polynomial curve, visited at uniform angular speed.

    The neighbor graph downstream measures cosine distance, so sampling must
    be even in angle, not in Euclidean arc length: wherever the tangent runs
    nearly radial, angular progress stalls and cells would pile into regions
    tighter than float32 resolution, starving the adaptive kernel. The curve
    is centered, rescaled to unit spread, offset by radius * axis, and then
    reparameterized by the cumulative chord length of its direction vectors.
    """
    grid = np.linspace(0.0, 1.0, _ARC_GRID + 1)

    def embed(u: np.ndarray) -> np.ndarray:
        return np.vander(u, 4, increasing=True)[:, 1:] @ coeffs  # t, t^2, t^3

    G = embed(grid)
    center = G.mean(axis=0)
    spread = np.sqrt(np.mean(np.sum((G - center) ** 2, axis=1)))
    if spread <= 0:
        raise ParameterError("degenerate curve: zero spread")

    def place(P: np.ndarray) -> np.ndarray:
        return radius * axis + scale * (P - center) / spread

    directions = place(G)
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    seg = np.linalg.norm(np.diff(directions, axis=0), axis=1)
    arc = np.concatenate(([0.0], np.cumsum(seg)))
    if arc[-1] <= 0:
        raise ParameterError("degenerate curve: no angular extent")
    u = np.interp(t, arc / arc[-1], grid)
    return place(embed(u))


def gen_trajectory(sc: TrajectoryScenario) -> tuple[EmbeddingStack, CellAnnotations]:
    """Embeddings = curve(t) + per-layer Gaussian noise; reference ordering = t."""
    if sc.dims < 2:
        raise ParameterError(f"curve needs dims >= 2, got {sc.dims}")
    if sc.n_cells < 2:
        raise ParameterError(f"need >= 2 cells, got {sc.n_cells}")
    if any(s < 0 for s in sc.noise_schedule):
        raise ParameterError("noise sigma must be >= 0")
    if sc.n_layers < 1:
        raise ParameterError("need >= 1 layer")
    if sc.radius <= 0 or sc.curve_scale <= 0:
        raise ParameterError("radius and curve_scale must be positive")

    streams = np.random.SeedSequence(sc.seed).spawn(2 + sc.n_layers)
    rng_t = np.random.default_rng(streams[0])
    # Stratified jitter instead of iid draws: iid sampling leaves occasional
    # runs of empty parameter space wider than the adaptive bandwidth can
    # bridge at sigma = 0 (cosine kernel weights fall off like
    # exp(-(gap/spacing)^4)), numerically disconnecting the noiseless layer.
    t = (np.arange(sc.n_cells) + rng_t.uniform(size=sc.n_cells)) / sc.n_cells
    t = rng_t.permutation(t)
    rng_shape = np.random.default_rng(streams[1])
    coeffs = rng_shape.normal(size=(3, sc.dims))
    axis = rng_shape.normal(size=sc.dims)
    axis /= np.linalg.norm(axis)

    curve = _unit_angular_curve(t, coeffs, axis, sc.radius, sc.curve_scale)

    layers = []
    for i, sigma in enumerate(sc.noise_schedule):
        rng = np.random.default_rng(streams[2 + i])
        noise = rng.normal(scale=sigma, size=curve.shape) if sigma > 0 else 0.0
        layers.append((curve + noise).astype(np.float32))

    ids = make_cell_ids(sc.n_cells)
    ann = CellAnnotations(
        cell_ids=ids,
        reference_pseudotime=t,
        root_cell=ids[int(np.argmin(t))],
    )
    stack = EmbeddingStack(layers=layers, model_name=f"synthetic-trajectory-L{sc.n_layers}")
    return stack, ann


def gen_perturbation(
    sc: PerturbationScenario,
) -> tuple[EmbeddingStack, CellAnnotations, CountMatrix]:
    """Counts and embeddings sharing planted block-structured effects.

    Counts for a cell of label p are Poisson(baseline * exp(effect_p)). Each
    signal layer applies its own random linear map to (effect_p + cell
    noise); scrambled layers are pure noise with no label information.
    """
    if sc.n_labels < 2:
        raise ParameterError("need >= 2 perturbation labels besides the control")
    if sc.baseline <= 0:
        raise ParameterError(f"baseline rate must be positive, got {sc.baseline}")
    if sc.n_blocks < 1 or sc.n_blocks > sc.n_labels:
        raise ParameterError(
            f"n_blocks must be in 1..{sc.n_labels}, got {sc.n_blocks}"
        )
    bad = [l for l in sc.scrambled_layers if not 1 <= l <= sc.n_layers]
    if bad:
        raise ParameterError(f"scrambled layer indices out of range: {bad}")

    streams = np.random.SeedSequence(sc.seed).spawn(4 + sc.n_layers)
    labels = sc.labels
    n_cells = (sc.n_labels + 1) * sc.n_cells_per_label

    # Label latents: unit block axis plus isotropic jitter, control at zero.
    rng = np.random.default_rng(streams[0])
    z = np.zeros((sc.n_labels + 1, sc.n_blocks))
    for i in range(sc.n_labels):
        z[i, i % sc.n_blocks] = 1.0
        z[i] += sc.jitter * rng.normal(size=sc.n_blocks)
    W = np.random.default_rng(streams[1]).normal(
        scale=1.0 / np.sqrt(sc.n_blocks), size=(sc.n_genes, sc.n_blocks)
    )
    effects = sc.effect_scale * z @ W.T  # (labels+control) x genes, control last = 0

    cell_label = np.repeat(np.arange(sc.n_labels + 1), sc.n_cells_per_label)
    latent = effects[cell_label]
    latent = latent + sc.cell_noise * np.random.default_rng(streams[2]).normal(
        size=(n_cells, sc.n_genes)
    )

    rates = sc.baseline * np.exp(effects[cell_label])
    counts_dense = np.random.default_rng(streams[3]).poisson(rates)
    all_labels = labels + [sc.control]
    ids = make_cell_ids(n_cells)
    counts = CountMatrix(
        gene_ids=[f"gene_{g:04d}" for g in range(sc.n_genes)],
        cell_ids=ids,
        matrix=sp.csr_matrix(counts_dense.T),  # genes x cells
    )

    scrambled = set(sc.scrambled_layers)
    layers = []
    for idx in range(1, sc.n_layers + 1):
        rng_l = np.random.default_rng(streams[3 + idx])
        if idx in scrambled:
            E = rng_l.normal(size=(n_cells, sc.embed_dim))
        else:
            M = rng_l.normal(
                scale=1.0 / np.sqrt(sc.n_genes), size=(sc.n_genes, sc.embed_dim)
            )
            E = latent @ M
        layers.append(E.astype(np.float32))

    ann = CellAnnotations(
        cell_ids=ids,
        perturbation=[all_labels[j] for j in cell_label],
    )
    stack = EmbeddingStack(
        layers=layers, model_name=f"synthetic-perturbation-L{sc.n_layers}"
    )
    return stack, ann, counts


def oracle_knn(X: np.ndarray, k: int) -> NeighborGraph:
    """Reference kNN: full cosine distance matrix, full stable sort per row."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError("oracle_knn expects an n x d matrix")
    n = X.shape[0]
    if n > ORACLE_MAX_N:
        raise ParameterError(f"oracle_knn is capped at n={ORACLE_MAX_N}, got {n}")
    if not 1 <= k < n:
        raise ParameterError(f"k must be in 1..{n - 1}, got {k}")
    D = scipy.spatial.distance.cdist(X, X, metric="cosine")
    np.fill_diagonal(D, np.inf)
    order = np.argsort(D, axis=1, kind="stable")[:, :k]
    dists = np.take_along_axis(D, order, axis=1)
    return NeighborGraph(
        n=n,
        k=k,
        indptr=np.arange(0, n * k + 1, k, dtype=np.int64),
        indices=order.reshape(-1).astype(np.int64),
        distances=dists.reshape(-1),
        symmetric=False,
        zero_norm_rows=0,
    )


def _oracle_ranks(v: np.ndarray) -> np.ndarray:
    n = len(v)
    ranks = np.empty(n)
    for i in range(n):
        less = equal = 0
        for j in range(n):
            if v[j] < v[i]:
                less += 1
            elif v[j] == v[i]:
                equal += 1
        # average of ranks less+1 .. less+equal
        ranks[i] = less + (equal + 1) / 2.0
    return ranks


def oracle_spearman(x: np.ndarray, y: np.ndarray) -> float:
    """Definitional tie-aware Spearman: explicit ranks, explicit Pearson."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ShapeError("oracle_spearman expects two equal-length vectors")
    n = len(x)
    if n > ORACLE_MAX_N:
        raise ParameterError(f"oracle_spearman is capped at n={ORACLE_MAX_N}, got {n}")
    if n < 2:
        raise ParameterError("need >= 2 observations")
    rx = _oracle_ranks(x)
    ry = _oracle_ranks(y)
    mx = sum(rx) / n
    my = sum(ry) / n
    sxy = sxx = syy = 0.0
    for i in range(n):
        dx = rx[i] - mx
        dy = ry[i] - my
        sxy += dx * dy
        sxx += dx * dx
        syy += dy * dy
    if sxx == 0.0 or syy == 0.0:
        raise ParameterError("constant input; correlation undefined")
    return sxy / np.sqrt(sxx * syy)


def oracle_eig(T: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-m eigenpairs of a dense (generally nonsymmetric) matrix.

    Eigenvalues sorted by descending real part; eigenvectors unit-normalized
    with the first nonzero entry made positive, matching the fast path's
    convention so results are directly comparable.
    """
    T = np.asarray(T, dtype=np.float64)
    if T.ndim != 2 or T.shape[0] != T.shape[1]:
        raise ShapeError("oracle_eig expects a square matrix")
    n = T.shape[0]
    if n > ORACLE_MAX_N:
        raise ParameterError(f"oracle_eig is capped at n={ORACLE_MAX_N}, got {n}")
    if not 1 <= m <= n:
        raise ParameterError(f"m must be in 1..{n}, got {m}")
    w, V = scipy.linalg.eig(T)
    order = np.argsort(-w.real, kind="stable")[:m]
    w = w[order].real
    V = V[:, order].real
    V = V / np.linalg.norm(V, axis=0)
    for j in range(V.shape[1]):
        nz = np.flatnonzero(np.abs(V[:, j]) > 1e-12)
        if nz.size and V[nz[0], j] < 0:
            V[:, j] = -V[:, j]
    return w, V
