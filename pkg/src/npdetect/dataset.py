"""Labeled function-corpus ingestion, class balancing, and fold planning.

Reads VDISC-style HDF5 shards (a string dataset of function sources plus a
parallel boolean dataset named by CWE id) or a CSV fallback with header
``id,source,label``. Records with empty/whitespace-only sources are skipped
and counted rather than failing the whole load, since real corpus shards
contain junk rows.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace

import h5py
import numpy as np

log = logging.getLogger(__name__)

# Default name of the function-source dataset inside a VDISC-style HDF5 file.
HDF5_SOURCE_DATASET = "functionSource"


class DatasetError(Exception):
    """Problem with corpus contents or parameters."""


class EmptyDatasetError(DatasetError):
    """No usable records after filtering."""


class DegenerateClassBalanceError(DatasetError):
    """Balancing requested but one class has no samples."""


@dataclass(frozen=True)
class CodeSample:
    """One function's source text with a binary vulnerability label."""

    id: str
    source: str
    label: int

    def __post_init__(self):
        if not self.source.strip():
            raise ValueError(f"sample {self.id!r} has empty source")
        if self.label not in (0, 1):
            raise ValueError(f"sample {self.id!r} label must be 0 or 1, got {self.label!r}")


@dataclass(frozen=True)
class Provenance:
    path: str
    cwe: str
    format: str
    skipped_empty: int = 0


@dataclass(frozen=True)
class LabeledDataset:
    samples: tuple[CodeSample, ...]
    provenance: Provenance

    def __post_init__(self):
        ids = [s.id for s in self.samples]
        if len(set(ids)) != len(ids):
            raise DatasetError("duplicate sample ids in dataset")

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def class_counts(self) -> dict[int, int]:
        counts = {0: 0, 1: 0}
        for s in self.samples:
            counts[s.label] += 1
        return counts

    def subset(self, indices) -> "LabeledDataset":
        return replace(self, samples=tuple(self.samples[i] for i in indices))


@dataclass(frozen=True)
class FoldPlan:
    """Per-sample fold assignment partitioning a dataset into k folds."""

    k: int
    assignments: tuple[int, ...]

    def __post_init__(self):
        if any(not 0 <= a < self.k for a in self.assignments):
            raise ValueError("fold assignments must lie in [0, k)")
        sizes = self.fold_sizes()
        if sizes and max(sizes) - min(sizes) > 1:
            raise ValueError("fold sizes may differ by at most 1")

    def fold_sizes(self) -> list[int]:
        sizes = [0] * self.k
        for a in self.assignments:
            sizes[a] += 1
        return sizes

    def validation_indices(self, fold: int) -> list[int]:
        return [i for i, a in enumerate(self.assignments) if a == fold]

    def training_indices(self, fold: int) -> list[int]:
        return [i for i, a in enumerate(self.assignments) if a != fold]


def cast_labels(raw) -> list[int]:
    """Boolean labels to numeric: true -> 1, false -> 0."""
    return [1 if bool(r) else 0 for r in raw]


def _decode(value) -> str:
    if isinstance(value, bytes):
        return value.decode("utf-8", errors="replace")
    return str(value)


def _parse_csv_label(raw: str, row: int):
    text = raw.strip().lower()
    if text in ("true", "1"):
        return 1
    if text in ("false", "0"):
        return 0
    raise DatasetError(f"row {row}: label must be one of true/false/0/1, got {raw!r}")


def load_dataset(path, cwe: str, format: str | None = None) -> LabeledDataset:
    """Load a labeled corpus; label = 1 iff the CWE field is true.

    ``format`` is ``"hdf5-vdisc"`` or ``"csv"``; when omitted it is inferred
    from the file suffix. Record order is preserved. Empty-source records
    are skipped, counted in the provenance, and logged.
    """
    path = str(path)
    if format is None:
        lower = path.lower()
        if lower.endswith((".h5", ".hdf5")):
            format = "hdf5-vdisc"
        elif lower.endswith(".csv"):
            format = "csv"
        else:
            raise DatasetError(f"cannot infer format from {path!r}; pass format=")
    if format == "hdf5-vdisc":
        rows = _read_hdf5(path, cwe)
    elif format == "csv":
        rows = _read_csv(path)
    else:
        raise DatasetError(f"unknown format {format!r} (expected hdf5-vdisc or csv)")

    samples = []
    skipped = 0
    for sample_id, source, label in rows:
        if not source.strip():
            skipped += 1
            continue
        samples.append(CodeSample(id=sample_id, source=source, label=label))
    if skipped:
        log.warning("skipped %d empty-source records while loading %s", skipped, path)
    if not samples:
        raise EmptyDatasetError(f"no usable records in {path}")
    return LabeledDataset(
        samples=tuple(samples),
        provenance=Provenance(path=path, cwe=cwe, format=format, skipped_empty=skipped),
    )


def _read_hdf5(path: str, cwe: str):
    with h5py.File(path, "r") as fh:
        if cwe not in fh:
            raise DatasetError(f"{path}: missing CWE dataset {cwe!r}")
        source_name = HDF5_SOURCE_DATASET
        if source_name not in fh:
            candidates = [name for name, ds in fh.items()
                          if name != cwe and getattr(ds.dtype, "kind", "") in ("O", "S", "U")]
            if len(candidates) != 1:
                raise DatasetError(
                    f"{path}: expected a {HDF5_SOURCE_DATASET!r} dataset or exactly one "
                    f"string dataset besides {cwe!r}, found {candidates}")
            source_name = candidates[0]
        sources = fh[source_name][...]
        flags = fh[cwe][...]
        if len(sources) != len(flags):
            raise DatasetError(
                f"{path}: {source_name} has {len(sources)} rows but {cwe} has {len(flags)}")
        labels = cast_labels(flags)
        stem = path.rsplit("/", 1)[-1]
        return [(f"{stem}:{i}", _decode(src), labels[i])
                for i, src in enumerate(sources)]


def _read_csv(path: str):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or \
                not {"id", "source", "label"}.issubset(reader.fieldnames):
            raise DatasetError(f"{path}: CSV header must contain id,source,label")
        rows = []
        for i, rec in enumerate(reader, start=1):
            rows.append((rec["id"], rec["source"] or "", _parse_csv_label(rec["label"], i)))
        return rows


def write_csv(ds: LabeledDataset, path) -> None:
    """Materialize a dataset in the CSV interchange format."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "source", "label"])
        for s in ds.samples:
            writer.writerow([s.id, s.source, s.label])


def balance(ds: LabeledDataset, seed: int) -> LabeledDataset:
    """Equalize class counts by seeded uniform undersampling of the majority.

    The minority class is kept whole; the majority class keeps
    ``min(class counts)`` members drawn without replacement by
    ``numpy.random.default_rng(seed).choice`` over its (ascending) sample
    positions. Retained samples keep their original relative order, so an
    already-balanced dataset passes through unchanged.
    """
    counts = ds.class_counts()
    if counts[0] == 0 or counts[1] == 0:
        raise DegenerateClassBalanceError(
            f"cannot balance dataset with class counts {counts}")
    if counts[0] == counts[1]:
        return ds
    target = min(counts.values())
    majority = 0 if counts[0] > counts[1] else 1
    majority_positions = np.array([i for i, s in enumerate(ds.samples)
                                   if s.label == majority])
    rng = np.random.default_rng(seed)
    kept_majority = set(rng.choice(majority_positions, size=target, replace=False).tolist())
    keep = [i for i, s in enumerate(ds.samples)
            if s.label != majority or i in kept_majority]
    return ds.subset(keep)


def make_folds(ds: LabeledDataset, k: int, seed: int) -> FoldPlan:
    """Seeded shuffle then round-robin fold assignment.

    Sample at shuffled position j goes to fold j % k, so fold sizes differ
    by at most one and the validation folds partition the dataset.
    """
    n = len(ds)
    if not 2 <= k <= n:
        raise DatasetError(f"k must be in [2, {n}], got {k}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    assignments = [0] * n
    for j, sample_index in enumerate(order):
        assignments[sample_index] = j % k
    return FoldPlan(k=k, assignments=tuple(assignments))


def train_test_split(ds: LabeledDataset, test_fraction: float,
                     seed: int) -> tuple[LabeledDataset, LabeledDataset]:
    """Seeded shuffle split; floor(n * test_fraction) samples go to test.

    Both splits keep the original sample order.
    """
    if not 0.0 < test_fraction < 1.0:
        raise DatasetError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n = len(ds)
    n_test = int(n * test_fraction)
    if n_test == 0 or n_test == n:
        raise DatasetError(f"test_fraction {test_fraction} leaves an empty split for n={n}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    test_set = set(order[:n_test].tolist())
    train_idx = [i for i in range(n) if i not in test_set]
    test_idx = [i for i in range(n) if i in test_set]
    return ds.subset(train_idx), ds.subset(test_idx)


def dataset_manifest(ds: LabeledDataset, seed: int | None = None,
                     splits: dict | None = None) -> dict:
    """JSON-ready manifest: per-class counts, provenance, and seed."""
    counts = ds.class_counts()
    manifest = {
        "schema_version": 1,
        "path": ds.provenance.path,
        "cwe": ds.provenance.cwe,
        "format": ds.provenance.format,
        "skipped_empty": ds.provenance.skipped_empty,
        "seed": seed,
        "counts": {"vulnerable": counts[1], "non_vulnerable": counts[0],
                   "total": len(ds)},
    }
    if splits is not None:
        manifest["splits"] = splits
    return manifest
