"""End-to-end extraction: checkpoint + counts -> container directory."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .containerio import Counts, write_extraction_container
from .errors import CheckpointError, ParameterError
from .model import ToyTransformer, load_checkpoint
from .pooling import parse_pooling, pool

BUNDLED_CHECKPOINTS = ("toy-4block",)


@dataclass(frozen=True)
class ExtractionConfig:
    """One extraction run: which model, how to pool, where to write."""

    model: str
    out: str | Path
    pooling: str = "mean"
    batch_size: int = 64
    device: str = "cpu"

    def validate(self) -> None:
        if self.batch_size < 1:
            raise ParameterError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.device != "cpu":
            raise ParameterError(
                f"only cpu inference is supported, got device {self.device!r}"
            )
        parse_pooling(self.pooling)


def resolve_checkpoint(model_id: str) -> Path:
    """Map a model identifier to a checkpoint directory.

    Bundled aliases are tried first; anything else is a filesystem path.
    """
    if model_id in BUNDLED_CHECKPOINTS:
        return Path(resources.files("cellstates") / "checkpoints" / model_id)
    path = Path(model_id)
    if path.is_dir():
        return path
    raise CheckpointError(
        f"unknown model {model_id!r}: not a bundled alias "
        f"{list(BUNDLED_CHECKPOINTS)} or a checkpoint directory"
    )


def extract_layers(cfg: ExtractionConfig, counts: Counts) -> Path:
    """Forward every cell through the frozen model, pool each block's hidden
    states, and write one layer matrix per block to a container directory.

    Cells are processed batch-sequentially; each cell's forward pass is
    independent, so results do not depend on batch_size.
    """
    cfg.validate()
    spec = parse_pooling(cfg.pooling)
    model = load_checkpoint(resolve_checkpoint(cfg.model))

    n = counts.n_cells
    columns = counts.matrix.tocsc()
    pooled = [np.empty((n, model.d_model)) for _ in range(model.n_blocks)]
    for start in range(0, n, cfg.batch_size):
        for i in range(start, min(start + cfg.batch_size, n)):
            col = np.zeros(counts.matrix.shape[0])
            sl = slice(columns.indptr[i], columns.indptr[i + 1])
            col[columns.indices[sl]] = columns.data[sl]
            ids, values = model.tokenize(col)
            for b, state in enumerate(model.forward(ids, values)):
                pooled[b][i] = pool(state, spec)

    model_name = f"{model.name}+{spec.tag}"
    return write_extraction_container(pooled, counts.cell_ids, model_name, cfg.out)
