"""Writer for the layer-embedding container format, plus counts input.

A container directory holds:

    manifest.json   format_version 1, model_name, n_cells, per-layer entries
                    ({index, dim, file, fnv1a64}), dtype "f32",
                    endianness "little", layout "row-major"
    cells.csv       cell_id, reference_pseudotime, perturbation, condition,
                    is_root ("NA" where unknown)
    layer_001.f32   row-major little-endian float32, one file per layer

Each layer file's FNV-1a 64-bit checksum is recorded in the manifest as a
16-digit hex string. Extraction output carries no biological annotations, so
every cells.csv column except cell_id is "NA".

Expression input arrives as MatrixMarket counts (genes x cells) with
genes.txt / barcodes.txt id sidecars next to the .mtx file.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from .errors import ExtractionError, InputError

FORMAT_VERSION = 1
LAYER_DTYPE = np.dtype("<f4")
CELLS_CSV_COLUMNS = ["cell_id", "reference_pseudotime", "perturbation", "condition", "is_root"]

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash of a byte string."""
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


@dataclass
class Counts:
    """Sparse nonnegative integer counts, genes x cells."""

    gene_ids: list[str]
    cell_ids: list[str]
    matrix: sp.csr_matrix

    def __post_init__(self) -> None:
        self.matrix = sp.csr_matrix(self.matrix, dtype=np.int64)
        if self.matrix.shape != (len(self.gene_ids), len(self.cell_ids)):
            raise InputError(
                f"count matrix shape {self.matrix.shape} does not match "
                f"{len(self.gene_ids)} genes x {len(self.cell_ids)} cells"
            )
        if len(set(self.cell_ids)) != len(self.cell_ids):
            raise InputError("duplicate cell id in counts")
        if self.matrix.nnz and self.matrix.data.min() < 0:
            raise InputError("counts must be nonnegative")

    @property
    def n_cells(self) -> int:
        return len(self.cell_ids)


def read_counts_mtx(mtx_path: str | Path) -> Counts:
    """Read counts.mtx; id sidecars are looked up next to it."""
    mtx = Path(mtx_path)
    if not mtx.is_file():
        raise InputError(f"counts file {mtx} not found")
    genes_path = mtx.parent / "genes.txt"
    cells_path = mtx.parent / "barcodes.txt"
    for p in (genes_path, cells_path):
        if not p.is_file():
            raise InputError(f"missing sidecar {p.name} next to {mtx.name}")
    try:
        matrix = scipy.io.mmread(mtx)
    except ValueError as e:
        raise InputError(f"cannot parse {mtx.name}: {e}") from e
    return Counts(
        gene_ids=genes_path.read_text().splitlines(),
        cell_ids=cells_path.read_text().splitlines(),
        matrix=sp.csr_matrix(matrix),
    )


def _layer_filename(index: int) -> str:
    return f"layer_{index:03d}.f32"


def write_extraction_container(
    layers: list[np.ndarray],
    cell_ids: list[str],
    model_name: str,
    out_dir: str | Path,
) -> Path:
    """Write pooled per-layer matrices as a container directory."""
    if not layers:
        raise ExtractionError("no layers to write")
    if len(set(cell_ids)) != len(cell_ids):
        raise ExtractionError("duplicate cell id")
    n = len(cell_ids)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    entries = []
    for i, m in enumerate(layers, start=1):
        m = np.ascontiguousarray(m, dtype=LAYER_DTYPE)
        if m.ndim != 2 or m.shape[0] != n:
            raise ExtractionError(
                f"layer {i} has shape {m.shape}, expected ({n}, dim)"
            )
        if not np.isfinite(m).all():
            row = int(np.where(~np.isfinite(m).all(axis=1))[0][0])
            raise ExtractionError(f"layer {i} row {row} is not finite")
        data = m.tobytes(order="C")
        fname = _layer_filename(i)
        (out / fname).write_bytes(data)
        entries.append(
            {
                "index": i,
                "dim": int(m.shape[1]),
                "file": fname,
                "fnv1a64": f"{fnv1a64(data):016x}",
            }
        )

    manifest = {
        "format_version": FORMAT_VERSION,
        "model_name": model_name,
        "n_cells": n,
        "layers": entries,
        "dtype": "f32",
        "endianness": "little",
        "layout": "row-major",
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )
    with open(out / "cells.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(CELLS_CSV_COLUMNS)
        for cid in cell_ids:
            w.writerow([cid, "NA", "NA", "NA", "NA"])
    return out


def verify_container_dir(path: str | Path) -> list[str]:
    """Re-check every written-container invariant; returns problem strings."""
    root = Path(path)
    problems: list[str] = []
    mpath = root / "manifest.json"
    if not mpath.is_file():
        return [f"no manifest.json in {root}"]
    try:
        manifest = json.loads(mpath.read_text())
    except json.JSONDecodeError as e:
        return [f"manifest is not valid JSON: {e}"]
    for key in ("format_version", "model_name", "n_cells", "layers", "dtype",
                "endianness", "layout"):
        if key not in manifest:
            problems.append(f"manifest is missing {key!r}")
    if problems:
        return problems
    if manifest["format_version"] != FORMAT_VERSION:
        problems.append(f"unsupported format_version {manifest['format_version']}")
    n = int(manifest["n_cells"])

    for entry in manifest["layers"]:
        fname = entry.get("file", "?")
        fpath = root / fname
        if not fpath.is_file():
            problems.append(f"layer file {fname} is missing")
            continue
        data = fpath.read_bytes()
        expected = n * int(entry["dim"]) * LAYER_DTYPE.itemsize
        if len(data) != expected:
            problems.append(f"{fname}: {len(data)} bytes, expected {expected}")
            continue
        digest = f"{fnv1a64(data):016x}"
        if digest != entry.get("fnv1a64"):
            problems.append(f"{fname}: checksum {digest} != manifest")
            continue
        if not np.isfinite(np.frombuffer(data, dtype=LAYER_DTYPE)).all():
            problems.append(f"{fname}: non-finite values")

    cpath = root / "cells.csv"
    if not cpath.is_file():
        problems.append(f"no cells.csv in {root}")
        return problems
    with open(cpath, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != CELLS_CSV_COLUMNS:
        problems.append(f"unexpected cells.csv header: {rows[:1]}")
        return problems
    ids = [r[0] for r in rows[1:]]
    if len(ids) != n:
        problems.append(f"cells.csv has {len(ids)} rows, manifest declares {n}")
    if len(set(ids)) != len(ids):
        problems.append("duplicate cell id in cells.csv")
    return problems
