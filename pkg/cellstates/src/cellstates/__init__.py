"""Per-block hidden-state extraction from transformer checkpoints.

Runs a frozen checkpoint over expression counts, pools each transformer
block's token states into one vector per cell, and writes the resulting
per-layer embedding matrices as a container directory that downstream
layer-evaluation tools consume.
"""

from .containerio import (
    Counts,
    fnv1a64,
    read_counts_mtx,
    verify_container_dir,
    write_extraction_container,
)
from .errors import (
    CellstatesError,
    CheckpointError,
    ExtractionError,
    InputError,
    ParameterError,
)
from .extract import ExtractionConfig, extract_layers, resolve_checkpoint
from .model import ToyTransformer, load_checkpoint
from .pooling import PoolingSpec, parse_pooling, pool
from .toy import build_toy_checkpoint, build_toy_counts

__version__ = "0.1.0"

__all__ = [
    "CellstatesError",
    "CheckpointError",
    "Counts",
    "ExtractionConfig",
    "ExtractionError",
    "InputError",
    "ParameterError",
    "PoolingSpec",
    "ToyTransformer",
    "build_toy_checkpoint",
    "build_toy_counts",
    "extract_layers",
    "fnv1a64",
    "load_checkpoint",
    "parse_pooling",
    "pool",
    "read_counts_mtx",
    "resolve_checkpoint",
    "verify_container_dir",
    "write_extraction_container",
]
