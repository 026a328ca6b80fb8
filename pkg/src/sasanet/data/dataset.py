"""Datasets, samples, subset views, and CSV/manifest IO.

Values live in a dense (n_samples, n_features) float64 matrix; categorical
entries hold integer vocabulary indices (the index after the last vocabulary
entry is the reserved unknown slot). Datasets are immutable after load and
carry a ``normalized`` flag so stats are never applied twice.
"""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .schema import CATEGORICAL, CONTINUOUS, FeatureSchema


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class Sample:
    values: np.ndarray
    label: float
    index: int = -1

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise DataError(f"sample {self.index}: non-finite feature value")


@dataclass(frozen=True, eq=False)
class SubsetView:
    """A sample restricted to a canonical (sorted) index set."""

    sample: Sample
    indices: tuple[int, ...]

    def __post_init__(self):
        canon = tuple(sorted(self.indices))
        if len(set(canon)) != len(canon):
            raise DataError(f"subset has duplicate indices: {self.indices}")
        if canon and (canon[0] < 0 or canon[-1] >= self.sample.values.shape[0]):
            raise DataError(f"subset indices {canon} out of range")
        object.__setattr__(self, "indices", canon)

    @property
    def values(self) -> np.ndarray:
        return self.sample.values[list(self.indices)]

    def __len__(self) -> int:
        return len(self.indices)

    def __eq__(self, other):
        if not isinstance(other, SubsetView):
            return NotImplemented
        return self.sample is other.sample and self.indices == other.indices

    def __hash__(self):
        return hash((id(self.sample), self.indices))


class Dataset:
    def __init__(self, schema: FeatureSchema, values: np.ndarray, labels: np.ndarray,
                 normalized: bool = False):
        values = np.asarray(values, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] != schema.n_features:
            raise DataError(f"values shape {values.shape} does not match schema with {schema.n_features} features")
        if labels.shape != (values.shape[0],):
            raise DataError(f"labels shape {labels.shape} does not match {values.shape[0]} rows")
        if not np.all(np.isfinite(values)):
            raise DataError("non-finite feature values")
        for j, feat in enumerate(schema.features):
            if feat.kind == CATEGORICAL:
                col = values[:, j]
                if np.any(col != np.round(col)) or col.min(initial=0) < 0 or col.max(initial=0) > feat.unk_index:
                    raise DataError(f"column '{feat.name}': categorical index out of range")
        self.schema = schema
        self.values = values
        self.values.setflags(write=False)
        self.labels = labels
        self.labels.setflags(write=False)
        self.normalized = normalized

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.schema.n_features

    def sample(self, i: int) -> Sample:
        return Sample(self.values[i], float(self.labels[i]), index=i)

    def subset(self, i: int, indices) -> SubsetView:
        return SubsetView(self.sample(i), tuple(int(j) for j in indices))

    def take(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.schema, self.values[rows].copy(), self.labels[rows].copy(),
                       normalized=self.normalized)

    def fingerprint(self) -> str:
        import hashlib

        h = hashlib.sha256()
        h.update(self.values.tobytes())
        h.update(self.labels.tobytes())
        return h.hexdigest()[:16]


def normalize(dataset: Dataset) -> Dataset:
    """Apply the schema's stats to continuous columns. Rejects double application."""
    if dataset.normalized:
        raise DataError("dataset is already normalized; refusing to apply stats twice")
    values = dataset.values.copy()
    for j, feat in enumerate(dataset.schema.features):
        if feat.kind == CONTINUOUS:
            values[:, j] = (values[:, j] - feat.mean) / feat.std
    return Dataset(dataset.schema, values, dataset.labels.copy(), normalized=True)


def load_csv(path, schema, normalize_continuous: bool = True) -> Dataset:
    """Read a header CSV whose columns are the schema features plus ``label``.

    Unknown categories map to the reserved unknown index with a warning;
    missing values are an error (the model's native subset support is the
    mechanism for absent features, not imputation).
    """
    if not isinstance(schema, FeatureSchema):
        schema = FeatureSchema.load(schema)
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file")
        expected = schema.names + ["label"]
        if header != expected:
            raise DataError(f"{path}: header {header} does not match schema columns {expected}")
        vocab_maps = [
            {tok: k for k, tok in enumerate(f.vocabulary)} if f.kind == CATEGORICAL else None
            for f in schema.features
        ]
        rows, labels = [], []
        for ln, row in enumerate(reader, start=2):
            if len(row) != len(expected):
                raise DataError(f"{path}:{ln}: expected {len(expected)} fields, got {len(row)}")
            vals = np.empty(schema.n_features)
            for j, (feat, cell) in enumerate(zip(schema.features, row[:-1])):
                if cell == "":
                    raise DataError(f"{path}:{ln}: missing value for '{feat.name}' (inputs must be complete)")
                if feat.kind == CATEGORICAL:
                    idx = vocab_maps[j].get(cell)
                    if idx is None:
                        warnings.warn(f"{path}:{ln}: unknown category '{cell}' for '{feat.name}', using UNK")
                        idx = feat.unk_index
                    vals[j] = idx
                else:
                    try:
                        vals[j] = float(cell)
                    except ValueError:
                        raise DataError(f"{path}:{ln}: cannot parse '{cell}' as float for '{feat.name}'")
            try:
                labels.append(float(row[-1]))
            except ValueError:
                raise DataError(f"{path}:{ln}: cannot parse label '{row[-1]}'")
            rows.append(vals)
    ds = Dataset(schema, np.array(rows).reshape(len(rows), schema.n_features),
                 np.array(labels), normalized=False)
    return normalize(ds) if normalize_continuous else ds


def save_csv(dataset: Dataset, path) -> None:
    """Write stored values verbatim (categorical indices become vocab tokens).

    Loading the result with ``normalize_continuous=False`` reproduces the
    stored matrix exactly; ``repr`` round-trips float64.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(dataset.schema.names + ["label"])
        for i in range(len(dataset)):
            row = []
            for j, feat in enumerate(dataset.schema.features):
                v = dataset.values[i, j]
                if feat.kind == CATEGORICAL:
                    k = int(v)
                    row.append(feat.vocabulary[k] if k < len(feat.vocabulary) else "<UNK>")
                else:
                    row.append(repr(float(v)))
            row.append(repr(float(dataset.labels[i])))
            writer.writerow(row)


def train_test_split(dataset: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset, dict]:
    """Seeded shuffle split; the returned manifest pins the row assignment."""
    if not 0 < test_fraction < 1:
        raise DataError(f"test_fraction must be in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(dataset))
    n_test = max(1, int(round(len(dataset) * test_fraction)))
    test_rows = np.sort(perm[:n_test])
    train_rows = np.sort(perm[n_test:])
    manifest = {
        "seed": seed,
        "test_fraction": test_fraction,
        "train_indices": train_rows.tolist(),
        "test_indices": test_rows.tolist(),
    }
    return dataset.take(train_rows), dataset.take(test_rows), manifest


def save_split_manifest(manifest: dict, path) -> None:
    Path(path).write_text(json.dumps(manifest) + "\n")


def load_split_manifest(path) -> dict:
    return json.loads(Path(path).read_text())
