"""Layer-wise representation-quality evaluation for cell embedding stacks.

Given per-layer embedding matrices from a transformer over the same cells,
this package scores every layer on two downstream readouts: recovery of a
reference pseudotime ordering via diffusion pseudotime, and alignment of
perturbation-centroid similarity structure with differential-expression
profiles. Results come back as per-layer score tables keyed by normalized
depth, with summaries locating the best-performing layer.
"""

from .container import (
    CellAnnotations,
    CountMatrix,
    EmbeddingStack,
    Manifest,
    read_container,
    read_counts,
    subset_cells,
    validate_container,
    write_container,
    write_counts,
)
from .diffusion import (
    DiffusionOperator,
    PseudotimeResult,
    dpt_distances,
    pick_root,
    spectral_decompose,
    transition_operator,
)
from .errors import (
    ComputationError,
    LayersweepError,
    ParameterError,
    ValidationError,
)
from .neighbors import NeighborGraph, knn_graph, symmetrize
from .prep import (
    DEProfile,
    PseudobulkTable,
    filter_cells,
    library_normalize_log1p,
    log_fold_change,
    pseudobulk,
    read_de_profiles,
    size_factors,
    write_de_profiles,
)
from .rsa import (
    PerturbationCentroids,
    SimilarityMatrix,
    bio_similarity,
    centroids,
    embedding_similarity,
    rsa_score,
    upper_tri,
)
from .stats import CorrelationResult, spearman, spearman_permutation_p
from .sweep import (
    LayerRow,
    LayerScoreReport,
    SweepConfig,
    SweepSummary,
    emit_report,
    normalized_depth,
    perturbation_sweep,
    summarize,
    trajectory_sweep,
)
from .synth import (
    PerturbationScenario,
    TrajectoryScenario,
    gen_perturbation,
    gen_trajectory,
    oracle_eig,
    oracle_knn,
    oracle_spearman,
)

__version__ = "0.1.0"

__all__ = [
    "CellAnnotations",
    "ComputationError",
    "CorrelationResult",
    "CountMatrix",
    "DEProfile",
    "DiffusionOperator",
    "EmbeddingStack",
    "LayerRow",
    "LayerScoreReport",
    "LayersweepError",
    "Manifest",
    "NeighborGraph",
    "ParameterError",
    "PerturbationCentroids",
    "PerturbationScenario",
    "PseudobulkTable",
    "PseudotimeResult",
    "SimilarityMatrix",
    "SweepConfig",
    "SweepSummary",
    "TrajectoryScenario",
    "ValidationError",
    "bio_similarity",
    "centroids",
    "dpt_distances",
    "embedding_similarity",
    "filter_cells",
    "gen_perturbation",
    "gen_trajectory",
    "knn_graph",
    "library_normalize_log1p",
    "log_fold_change",
    "normalized_depth",
    "oracle_eig",
    "oracle_knn",
    "oracle_spearman",
    "perturbation_sweep",
    "pick_root",
    "pseudobulk",
    "read_container",
    "read_counts",
    "read_de_profiles",
    "rsa_score",
    "size_factors",
    "spearman",
    "spearman_permutation_p",
    "spectral_decompose",
    "subset_cells",
    "summarize",
    "symmetrize",
    "trajectory_sweep",
    "transition_operator",
    "upper_tri",
    "validate_container",
    "write_container",
    "write_counts",
    "write_de_profiles",
]
