"""On-disk embedding container and the in-memory data model.

Layout of a container directory:

    manifest.json   format_version, model_name, n_cells, per-layer entries
    cells.csv       cell_id, reference_pseudotime, perturbation, condition, is_root
    layer_001.f32   row-major little-endian float32, one file per layer
    ...

Each layer file carries a 64-bit FNV-1a checksum in the manifest. Counts are
exchanged separately as MatrixMarket coordinate files plus id sidecars.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.io
import scipy.sparse as sp

from .errors import (
    ChecksumError,
    DuplicateIdError,
    EmptyResultError,
    MissingLayerError,
    NonFiniteError,
    ShapeError,
    ValidationError,
)

FORMAT_VERSION = 1
LAYER_DTYPE = np.dtype("<f4")
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_CHUNK = 1 << 20

CELLS_CSV_COLUMNS = ["cell_id", "reference_pseudotime", "perturbation", "condition", "is_root"]


def fnv1a64(chunks: Iterable[bytes]) -> int:
    """FNV-1a 64-bit hash over an iterable of byte chunks."""
    h = _FNV_OFFSET
    for chunk in chunks:
        for b in chunk:
            h = ((h ^ b) * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def fnv1a64_file(path: Path) -> int:
    def chunks():
        with open(path, "rb") as f:
            while True:
                block = f.read(_CHUNK)
                if not block:
                    return
                yield block

    return fnv1a64(chunks())


def _layer_filename(index: int) -> str:
    return f"layer_{index:03d}.f32"


@dataclass
class EmbeddingStack:
    """Per-layer cell-embedding matrices, rows aligned across layers."""

    layers: list[np.ndarray]
    model_name: str = "unknown"

    def __post_init__(self) -> None:
        if len(self.layers) < 1:
            raise ShapeError("an embedding stack needs at least one layer")
        self.layers = [np.ascontiguousarray(m, dtype=np.float32) for m in self.layers]
        n = self.layers[0].shape[0]
        for i, m in enumerate(self.layers, start=1):
            if m.ndim != 2:
                raise ShapeError(f"layer {i} is not a matrix")
            if m.shape[0] != n:
                raise ShapeError(f"layer {i} has {m.shape[0]} rows, expected {n}")
            if m.shape[1] < 1:
                raise ShapeError(f"layer {i} has no columns")

    @property
    def n_cells(self) -> int:
        return self.layers[0].shape[0]

    @property
    def dims(self) -> list[int]:
        return [m.shape[1] for m in self.layers]

    @property
    def layer_count(self) -> int:
        return len(self.layers)

    def check_finite(self) -> None:
        for i, m in enumerate(self.layers, start=1):
            if not np.isfinite(m).all():
                row = int(np.where(~np.isfinite(m).all(axis=1))[0][0])
                raise NonFiniteError(f"layer {i} row {row} contains NaN or infinity")


@dataclass
class CellAnnotations:
    """Per-cell biological annotations aligned with an EmbeddingStack."""

    cell_ids: list[str]
    reference_pseudotime: np.ndarray | None = None
    perturbation: list[str | None] | None = None
    condition: list[str | None] | None = None
    root_cell: str | None = None

    def __post_init__(self) -> None:
        n = len(self.cell_ids)
        if len(set(self.cell_ids)) != n:
            seen: set[str] = set()
            dup = next(c for c in self.cell_ids if c in seen or seen.add(c))
            raise DuplicateIdError(f"duplicate cell id {dup!r}")
        if self.reference_pseudotime is not None:
            self.reference_pseudotime = np.asarray(self.reference_pseudotime, dtype=np.float64)
            if self.reference_pseudotime.shape != (n,):
                raise ShapeError("reference_pseudotime length does not match cell_ids")
            finite = self.reference_pseudotime[np.isfinite(self.reference_pseudotime)]
            if (finite < 0).any():
                raise ValidationError("reference_pseudotime must be nonnegative")
        for name in ("perturbation", "condition"):
            col = getattr(self, name)
            if col is not None and len(col) != n:
                raise ShapeError(f"{name} length does not match cell_ids")
        if self.root_cell is not None and self.root_cell not in self.cell_ids:
            raise ValidationError(f"root cell {self.root_cell!r} is not a known cell id")

    @property
    def n_cells(self) -> int:
        return len(self.cell_ids)

    def root_index(self) -> int | None:
        if self.root_cell is None:
            return None
        return self.cell_ids.index(self.root_cell)


@dataclass
class CountMatrix:
    """Sparse nonnegative integer counts, genes x cells."""

    gene_ids: list[str]
    cell_ids: list[str]
    matrix: sp.csr_matrix

    def __post_init__(self) -> None:
        self.matrix = sp.csr_matrix(self.matrix, dtype=np.int64)
        if self.matrix.shape != (len(self.gene_ids), len(self.cell_ids)):
            raise ShapeError(
                f"count matrix shape {self.matrix.shape} does not match "
                f"{len(self.gene_ids)} genes x {len(self.cell_ids)} cells"
            )
        if len(set(self.gene_ids)) != len(self.gene_ids):
            raise DuplicateIdError("duplicate gene id")
        if len(set(self.cell_ids)) != len(self.cell_ids):
            raise DuplicateIdError("duplicate cell id in counts")
        if self.matrix.nnz and self.matrix.data.min() < 0:
            raise ValidationError("counts must be nonnegative")

    @property
    def n_genes(self) -> int:
        return len(self.gene_ids)

    @property
    def n_cells(self) -> int:
        return len(self.cell_ids)


@dataclass
class Manifest:
    format_version: int
    model_name: str
    n_cells: int
    layers: list[dict]  # {"index", "dim", "file", "fnv1a64"}
    dtype: str = "f32"
    endianness: str = "little"
    layout: str = "row-major"

    def to_json(self) -> str:
        return json.dumps(
            {
                "format_version": self.format_version,
                "model_name": self.model_name,
                "n_cells": self.n_cells,
                "layers": self.layers,
                "dtype": self.dtype,
                "endianness": self.endianness,
                "layout": self.layout,
            },
            indent=2,
            sort_keys=True,
        ) + "\n"

    @staticmethod
    def from_json(text: str) -> "Manifest":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as e:
            raise ValidationError(f"manifest is not valid JSON: {e}") from e
        try:
            m = Manifest(
                format_version=int(raw["format_version"]),
                model_name=str(raw["model_name"]),
                n_cells=int(raw["n_cells"]),
                layers=list(raw["layers"]),
                dtype=str(raw["dtype"]),
                endianness=str(raw["endianness"]),
                layout=str(raw["layout"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"manifest is missing or has malformed keys: {e}") from e
        if m.format_version != FORMAT_VERSION:
            raise ValidationError(f"unsupported format_version {m.format_version}")
        if m.dtype != "f32" or m.endianness != "little" or m.layout != "row-major":
            raise ValidationError("unsupported dtype/endianness/layout combination")
        return m


def _format_optional_float(x: float | None) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "NA"
    return repr(float(x))


def write_cells_csv(ann: CellAnnotations, path: Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(CELLS_CSV_COLUMNS)
        for i, cid in enumerate(ann.cell_ids):
            pt = None if ann.reference_pseudotime is None else float(ann.reference_pseudotime[i])
            pert = ann.perturbation[i] if ann.perturbation is not None else None
            cond = ann.condition[i] if ann.condition is not None else None
            if ann.root_cell is None:
                root = "NA"
            else:
                root = "1" if cid == ann.root_cell else "0"
            w.writerow(
                [
                    cid,
                    _format_optional_float(pt),
                    pert if pert is not None else "NA",
                    cond if cond is not None else "NA",
                    root,
                ]
            )


def read_cells_csv(path: Path) -> CellAnnotations:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path.name} is empty") from None
        if header != CELLS_CSV_COLUMNS:
            raise ValidationError(f"unexpected cells.csv header: {header}")
        ids: list[str] = []
        pts: list[float] = []
        perts: list[str | None] = []
        conds: list[str | None] = []
        roots: list[str] = []
        for row in reader:
            if len(row) != len(CELLS_CSV_COLUMNS):
                raise ValidationError(f"malformed cells.csv row: {row}")
            ids.append(row[0])
            pts.append(math.nan if row[1] == "NA" else float(row[1]))
            perts.append(None if row[2] == "NA" else row[2])
            conds.append(None if row[3] == "NA" else row[3])
            if row[4] == "1":
                roots.append(row[0])
            elif row[4] not in ("0", "NA"):
                raise ValidationError(f"is_root must be 0, 1 or NA, got {row[4]!r}")
    if len(roots) > 1:
        raise ValidationError(f"multiple root cells flagged: {roots}")
    pt_arr = np.array(pts, dtype=np.float64)
    return CellAnnotations(
        cell_ids=ids,
        reference_pseudotime=None if np.isnan(pt_arr).all() else pt_arr,
        perturbation=None if all(p is None for p in perts) else perts,
        condition=None if all(c is None for c in conds) else conds,
        root_cell=roots[0] if roots else None,
    )


def write_container(stack: EmbeddingStack, ann: CellAnnotations, path: str | Path) -> None:
    """Write a stack plus annotations as a container directory."""
    if stack.n_cells != ann.n_cells:
        raise ShapeError(
            f"stack has {stack.n_cells} cells but annotations have {ann.n_cells}"
        )
    stack.check_finite()
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IOError(f"cannot create container directory {out}: {e}") from e

    entries = []
    for i, m in enumerate(stack.layers, start=1):
        data = np.ascontiguousarray(m, dtype=LAYER_DTYPE).tobytes(order="C")
        fname = _layer_filename(i)
        (out / fname).write_bytes(data)
        entries.append(
            {
                "index": i,
                "dim": int(m.shape[1]),
                "file": fname,
                "fnv1a64": f"{fnv1a64([data]):016x}",
            }
        )
    manifest = Manifest(
        format_version=FORMAT_VERSION,
        model_name=stack.model_name,
        n_cells=stack.n_cells,
        layers=entries,
    )
    (out / "manifest.json").write_text(manifest.to_json())
    write_cells_csv(ann, out / "cells.csv")


def read_manifest(path: str | Path) -> Manifest:
    mpath = Path(path) / "manifest.json"
    if not mpath.is_file():
        raise ValidationError(f"no manifest.json in {path}")
    return Manifest.from_json(mpath.read_text())


def _load_layer(root: Path, entry: dict, n_cells: int) -> np.ndarray:
    fname = entry["file"]
    dim = int(entry["dim"])
    fpath = root / fname
    if not fpath.is_file():
        raise MissingLayerError(f"layer file {fname} is missing")
    expected_size = n_cells * dim * LAYER_DTYPE.itemsize
    actual_size = fpath.stat().st_size
    if actual_size != expected_size:
        raise ChecksumError(
            f"{fname}: expected {expected_size} bytes for {n_cells}x{dim}, found {actual_size}"
        )
    data = fpath.read_bytes()
    digest = f"{fnv1a64([data]):016x}"
    if digest != entry["fnv1a64"]:
        raise ChecksumError(f"{fname}: checksum {digest} != manifest {entry['fnv1a64']}")
    m = np.frombuffer(data, dtype=LAYER_DTYPE).reshape(n_cells, dim)
    if not np.isfinite(m).all():
        row = int(np.where(~np.isfinite(m).all(axis=1))[0][0])
        raise NonFiniteError(f"layer {entry['index']} row {row} contains NaN or infinity")
    return m


def read_container(path: str | Path) -> tuple[EmbeddingStack, CellAnnotations]:
    """Load and fully validate a container directory."""
    root = Path(path)
    manifest = read_manifest(root)
    if len(manifest.layers) < 1:
        raise ValidationError("manifest lists no layers")
    layers = [_load_layer(root, entry, manifest.n_cells) for entry in manifest.layers]
    cpath = root / "cells.csv"
    if not cpath.is_file():
        raise ValidationError(f"no cells.csv in {path}")
    ann = read_cells_csv(cpath)
    if ann.n_cells != manifest.n_cells:
        raise ShapeError(
            f"cells.csv has {ann.n_cells} rows but manifest declares {manifest.n_cells}"
        )
    stack = EmbeddingStack(layers=layers, model_name=manifest.model_name)
    return stack, ann


@dataclass(frozen=True)
class ValidationFailure:
    code: str
    message: str


@dataclass
class ValidationReport:
    failures: list[ValidationFailure] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def add(self, code: str, message: str) -> None:
        self.failures.append(ValidationFailure(code, message))


def validate_container(path: str | Path) -> ValidationReport:
    """Check every container invariant, streaming one layer at a time.

    Failures are report entries; this never raises on bad containers.
    """
    root = Path(path)
    report = ValidationReport()
    try:
        manifest = read_manifest(root)
    except ValidationError as e:
        report.add("manifest-error", str(e))
        return report
    if len(manifest.layers) < 1:
        report.add("manifest-error", "manifest lists no layers")
        return report

    for entry in manifest.layers:
        fname = entry.get("file", "?")
        fpath = root / fname
        if not fpath.is_file():
            report.add("missing-layer", f"layer file {fname} is missing")
            continue
        dim = int(entry.get("dim", 0))
        if dim < 1:
            report.add("dimension-mismatch", f"{fname}: declared dim {dim} < 1")
            continue
        expected_size = manifest.n_cells * dim * LAYER_DTYPE.itemsize
        actual_size = fpath.stat().st_size
        if actual_size != expected_size:
            report.add(
                "dimension-mismatch",
                f"{fname}: expected {expected_size} bytes for {manifest.n_cells}x{dim}, "
                f"found {actual_size}",
            )
            continue
        digest = f"{fnv1a64_file(fpath):016x}"
        if digest != entry.get("fnv1a64"):
            report.add(
                "checksum-mismatch",
                f"{fname}: checksum {digest} != manifest {entry.get('fnv1a64')}",
            )
            continue
        m = np.fromfile(fpath, dtype=LAYER_DTYPE).reshape(manifest.n_cells, dim)
        if not np.isfinite(m).all():
            row = int(np.where(~np.isfinite(m).all(axis=1))[0][0])
            report.add("non-finite", f"layer {entry['index']} row {row} contains NaN or infinity")
        del m

    cpath = root / "cells.csv"
    if not cpath.is_file():
        report.add("missing-annotations", f"no cells.csv in {path}")
        return report
    try:
        ann = read_cells_csv(cpath)
    except (ValidationError, ValueError) as e:
        report.add("annotation-error", str(e))
        return report
    if ann.n_cells != manifest.n_cells:
        report.add(
            "shape-mismatch",
            f"cells.csv has {ann.n_cells} rows but manifest declares {manifest.n_cells}",
        )
    return report


def write_counts(counts: CountMatrix, directory: str | Path) -> None:
    """Write counts.mtx plus genes.txt / barcodes.txt sidecars."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    scipy.io.mmwrite(out / "counts.mtx", counts.matrix.tocoo(), field="integer")
    (out / "genes.txt").write_text("".join(g + "\n" for g in counts.gene_ids))
    (out / "barcodes.txt").write_text("".join(c + "\n" for c in counts.cell_ids))


def read_counts(mtx_path: str | Path) -> CountMatrix:
    """Read counts.mtx; id sidecars are looked up next to it."""
    mtx = Path(mtx_path)
    if not mtx.is_file():
        raise ValidationError(f"counts file {mtx} not found")
    genes_path = mtx.parent / "genes.txt"
    cells_path = mtx.parent / "barcodes.txt"
    for p in (genes_path, cells_path):
        if not p.is_file():
            raise ValidationError(f"missing sidecar {p.name} next to {mtx.name}")
    try:
        matrix = scipy.io.mmread(mtx)
    except ValueError as e:
        raise ValidationError(f"cannot parse {mtx.name}: {e}") from e
    gene_ids = genes_path.read_text().splitlines()
    cell_ids = cells_path.read_text().splitlines()
    return CountMatrix(gene_ids=gene_ids, cell_ids=cell_ids, matrix=sp.csr_matrix(matrix))


def make_cell_ids(n: int, prefix: str = "cell") -> list[str]:
    width = max(4, len(str(n - 1)))
    return [f"{prefix}_{i:0{width}d}" for i in range(n)]


def subset_cells(
    stack: EmbeddingStack, ann: CellAnnotations, mask: np.ndarray
) -> tuple[EmbeddingStack, CellAnnotations]:
    """Restrict a stack and its annotations to the cells where mask is True."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (stack.n_cells,) or ann.n_cells != stack.n_cells:
        raise ShapeError(
            f"mask of shape {mask.shape} for {stack.n_cells} embedding rows "
            f"and {ann.n_cells} annotated cells"
        )
    if not mask.any():
        raise EmptyResultError("cell subset is empty")
    idx = np.flatnonzero(mask)
    kept_ids = [ann.cell_ids[i] for i in idx]
    root = ann.root_cell if ann.root_cell in set(kept_ids) else None
    sub_ann = CellAnnotations(
        cell_ids=kept_ids,
        reference_pseudotime=(
            None if ann.reference_pseudotime is None else ann.reference_pseudotime[idx]
        ),
        perturbation=(
            None if ann.perturbation is None else [ann.perturbation[i] for i in idx]
        ),
        condition=(
            None if ann.condition is None else [ann.condition[i] for i in idx]
        ),
        root_cell=root,
    )
    sub_stack = EmbeddingStack(
        layers=[m[idx] for m in stack.layers], model_name=stack.model_name
    )
    return sub_stack, sub_ann
