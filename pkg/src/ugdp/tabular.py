"""Categorical tabular datasets: ingestion, projection, filtering and encoding.

A :class:`Dataset` stores every attribute as an integer code into the
attribute's vocabulary, plus a 0/1 outcome vector.  Everything here is
immutable; operations return new objects.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataValueError, LabelError, SchemaError


@dataclass(frozen=True)
class Attribute:
    name: str
    values: tuple[str, ...]

    @property
    def cardinality(self) -> int:
        return len(self.values)

    def code(self, value: str) -> int:
        try:
            return self.values.index(value)
        except ValueError:
            raise DataValueError(f"value {value!r} not in vocabulary of {self.name!r}") from None


@dataclass(frozen=True)
class AttributeSchema:
    """Ordered attributes with their vocabularies, plus the label column.

    ``label_values`` holds the raw label strings mapped to 0 and 1.
    """

    attributes: tuple[Attribute, ...]
    label_name: str
    label_values: tuple[str, str] = ("0", "1")

    def __post_init__(self):
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate attribute names in {names}")
        if self.label_name in names:
            raise SchemaError(f"label {self.label_name!r} is also an attribute")
        for a in self.attributes:
            if len(set(a.values)) != len(a.values):
                raise SchemaError(f"duplicate values in attribute {a.name!r}")
        if len(self.label_values) != 2 or self.label_values[0] == self.label_values[1]:
            raise SchemaError(f"label values must be two distinct strings, got {self.label_values}")

    @property
    def names(self) -> list[str]:
        return [a.name for a in self.attributes]

    @property
    def cardinalities(self) -> list[int]:
        return [a.cardinality for a in self.attributes]

    def __len__(self) -> int:
        return len(self.attributes)

    def index(self, name: str) -> int:
        for i, a in enumerate(self.attributes):
            if a.name == name:
                return i
        raise SchemaError(f"unknown attribute {name!r}")

    def attribute(self, name: str) -> Attribute:
        return self.attributes[self.index(name)]

    def check_declared(self) -> None:
        """Stricter check for user-declared schemas: every attribute needs >= 2 values."""
        for a in self.attributes:
            if a.cardinality < 2:
                raise SchemaError(f"attribute {a.name!r} has cardinality {a.cardinality} < 2")

    def to_dict(self) -> dict:
        return {
            "label_name": self.label_name,
            "label_values": list(self.label_values),
            "attributes": [{"name": a.name, "values": list(a.values)} for a in self.attributes],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "AttributeSchema":
        try:
            attrs = tuple(Attribute(a["name"], tuple(a["values"])) for a in d["attributes"])
            return cls(attrs, d["label_name"], tuple(d.get("label_values", ("0", "1"))))
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed schema document: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "AttributeSchema":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True, eq=False)
class Dataset:
    schema: AttributeSchema
    rows: np.ndarray  # (n, m) int64 codes
    labels: np.ndarray  # (n,) int8 in {0, 1}

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64)
        labels = np.asarray(self.labels, dtype=np.int8)
        if rows.ndim != 2:
            rows = rows.reshape(len(labels), len(self.schema))
        if rows.shape != (len(labels), len(self.schema)):
            raise SchemaError(f"rows shape {rows.shape} does not match {len(labels)} labels "
                              f"and {len(self.schema)} attributes")
        if labels.size and not np.isin(labels, (0, 1)).all():
            raise LabelError("labels must be 0/1")
        for j, k in enumerate(self.schema.cardinalities):
            col = rows[:, j]
            if col.size and (col.min() < 0 or col.max() >= k):
                bad = int(np.flatnonzero((col < 0) | (col >= k))[0])
                raise DataValueError(f"row {bad}: code {col[bad]} out of range for "
                                     f"attribute {self.schema.attributes[j].name!r}")
        rows.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_records(self) -> int:
        return len(self.labels)

    def subset(self, index) -> "Dataset":
        return Dataset(self.schema, self.rows[index], self.labels[index])

    def equals(self, other: "Dataset") -> bool:
        return (self.schema == other.schema
                and np.array_equal(self.rows, other.rows)
                and np.array_equal(self.labels, other.labels))

    def record_tuples(self, index: Iterable[int] | None = None) -> list[tuple[str, ...]]:
        """Value-name tuples for the given records (all records by default)."""
        idx = range(len(self)) if index is None else index
        vocab = [a.values for a in self.schema.attributes]
        return [tuple(vocab[j][c] for j, c in enumerate(self.rows[i])) for i in idx]


@dataclass(frozen=True, eq=False)
class OneHotMatrix:
    data: np.ndarray  # (n, D) float64 0/1
    offsets: tuple[int, ...]  # start column of each block
    widths: tuple[int, ...]
    include_label: bool = False

    @property
    def width(self) -> int:
        return int(sum(self.widths))

    def blocks(self):
        for off, w in zip(self.offsets, self.widths):
            yield slice(off, off + w)


def _map_label(raw: str, label_values: Sequence[str], row: int) -> int:
    if raw == label_values[1]:
        return 1
    if raw == label_values[0]:
        return 0
    raise LabelError(f"row {row}: label value {raw!r} is not one of {list(label_values)}")


def load_csv(path, label_column: str, declared_schema: AttributeSchema | None = None, *,
             positive_label: str | None = None, delimiter: str = ",",
             columns: Sequence[str] | None = None) -> Dataset:
    """Read a headed CSV of categorical columns into a :class:`Dataset`.

    Without a declared schema every non-label column (or only ``columns``)
    becomes an attribute whose vocabulary is inferred in first-appearance
    order.  The label column must hold exactly two distinct strings;
    ``positive_label`` picks the one coded 1 (default: the larger string in
    sort order, so ``no``/``yes`` maps ``yes`` to 1).
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such data file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: missing header row") from None
        records = [r for r in reader if r]

    if label_column not in header:
        raise SchemaError(f"{path}: label column {label_column!r} not in header")
    if declared_schema is not None:
        declared_schema.check_declared()
        attr_names = declared_schema.names
    elif columns is not None:
        attr_names = list(columns)
    else:
        attr_names = [h for h in header if h != label_column]
    missing = [n for n in attr_names if n not in header]
    if missing:
        raise SchemaError(f"{path}: columns {missing} not in header")
    col_idx = [header.index(n) for n in attr_names]
    label_idx = header.index(label_column)

    for i, r in enumerate(records):
        if len(r) != len(header):
            raise DataValueError(f"{path}: row {i + 1} has {len(r)} fields, expected {len(header)}")

    raw_labels = [r[label_idx] for r in records]
    if declared_schema is not None:
        label_values = declared_schema.label_values
    else:
        distinct = sorted(set(raw_labels))
        if len(distinct) > 2:
            raise LabelError(f"{path}: label column {label_column!r} has {len(distinct)} "
                             f"distinct values {distinct[:5]}")
        if positive_label is not None:
            others = [v for v in distinct if v != positive_label]
            label_values = (others[0] if others else "0", positive_label)
        elif len(distinct) == 2:
            label_values = (distinct[0], distinct[1])
        else:
            label_values = ("0", "1")
        if len(set(raw_labels) - set(label_values)) > 0:
            raise LabelError(f"{path}: label values {distinct} do not match positive label "
                             f"{positive_label!r}")
    labels = np.array([_map_label(v, label_values, i + 1) for i, v in enumerate(raw_labels)],
                      dtype=np.int8)

    n, m = len(records), len(attr_names)
    rows = np.empty((n, m), dtype=np.int64)
    attributes = []
    for j, (name, c) in enumerate(zip(attr_names, col_idx)):
        if declared_schema is not None:
            vocab = declared_schema.attributes[j].values
            lookup = {v: k for k, v in enumerate(vocab)}
            for i, r in enumerate(records):
                try:
                    rows[i, j] = lookup[r[c]]
                except KeyError:
                    raise DataValueError(f"{path}: row {i + 1}, column {name!r}: value "
                                         f"{r[c]!r} not in declared vocabulary") from None
        else:
            lookup = {}
            for i, r in enumerate(records):
                rows[i, j] = lookup.setdefault(r[c], len(lookup))
            vocab = tuple(lookup)
        attributes.append(Attribute(name, tuple(vocab)))
    schema = declared_schema or AttributeSchema(tuple(attributes), label_column, label_values)
    return Dataset(schema, rows, labels)


def write_csv(ds: Dataset, path, delimiter: str = ",") -> None:
    """Write value names in schema column order with the label last."""
    vocab = [np.asarray(a.values, dtype=object) for a in ds.schema.attributes]
    label_names = np.asarray(ds.schema.label_values, dtype=object)
    cols = [v[ds.rows[:, j]] for j, v in enumerate(vocab)] + [label_names[ds.labels]]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(ds.schema.names + [ds.schema.label_name])
        w.writerows(zip(*cols)) if len(ds) else None


def select_attributes(ds: Dataset, names: Sequence[str]) -> Dataset:
    idx = [ds.schema.index(n) for n in names]
    schema = AttributeSchema(tuple(ds.schema.attributes[i] for i in idx),
                             ds.schema.label_name, ds.schema.label_values)
    return Dataset(schema, ds.rows[:, idx], ds.labels)


def filter_rows(ds: Dataset, drop_values: Mapping[str, Iterable[str]]) -> Dataset:
    """Drop every record holding one of ``drop_values[attr]`` in column ``attr``."""
    keep = np.ones(len(ds), dtype=bool)
    for name, values in drop_values.items():
        attr = ds.schema.attribute(name)
        codes = [attr.code(v) for v in values]
        keep &= ~np.isin(ds.rows[:, ds.schema.index(name)], codes)
    return ds.subset(keep)


def prune_vocabulary(ds: Dataset) -> Dataset:
    """Drop vocabulary entries that no record uses, keeping the original order."""
    attrs, cols = [], []
    for j, a in enumerate(ds.schema.attributes):
        used = np.zeros(a.cardinality, dtype=bool)
        used[ds.rows[:, j]] = True
        remap = np.cumsum(used) - 1
        attrs.append(Attribute(a.name, tuple(v for v, u in zip(a.values, used) if u)))
        cols.append(remap[ds.rows[:, j]])
    rows = np.stack(cols, axis=1) if cols else ds.rows
    schema = AttributeSchema(tuple(attrs), ds.schema.label_name, ds.schema.label_values)
    return Dataset(schema, rows, ds.labels)


def one_hot(ds: Dataset, include_label: bool = False) -> OneHotMatrix:
    widths = list(ds.schema.cardinalities) + ([2] if include_label else [])
    offsets = np.concatenate([[0], np.cumsum(widths)[:-1]]).astype(int) if widths else np.array([], int)
    data = np.zeros((len(ds), int(sum(widths))), dtype=np.float64)
    r = np.arange(len(ds))
    for j in range(len(ds.schema)):
        data[r, offsets[j] + ds.rows[:, j]] = 1.0
    if include_label:
        data[r, offsets[-1] + ds.labels] = 1.0
    return OneHotMatrix(data, tuple(int(o) for o in offsets), tuple(widths), include_label)


def decode_one_hot(oh: OneHotMatrix, schema: AttributeSchema) -> Dataset:
    """Inverse of :func:`one_hot` by argmax within each block."""
    codes = [np.argmax(oh.data[:, s], axis=1) for s in oh.blocks()]
    m = len(schema)
    rows = np.stack(codes[:m], axis=1) if m else np.empty((len(oh.data), 0), np.int64)
    labels = codes[m] if oh.include_label else np.zeros(len(oh.data), np.int8)
    return Dataset(schema, rows, labels)


def k_fold_split(n_or_ds, k: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Shuffled k-fold (train, validation) index pairs.

    The first ``n % k`` folds get one extra record.
    """
    n = len(n_or_ds) if not isinstance(n_or_ds, (int, np.integer)) else int(n_or_ds)
    if not 2 <= k <= n:
        raise ValueError(f"k must lie in [2, {n}], got {k}")
    perm = np.random.default_rng(seed).permutation(n)
    sizes = np.full(k, n // k)
    sizes[: n % k] += 1
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    folds = []
    for f in range(k):
        val = np.sort(perm[bounds[f]:bounds[f + 1]])
        train = np.sort(np.concatenate([perm[:bounds[f]], perm[bounds[f + 1]:]]))
        folds.append((train, val))
    return folds


def value_counts(ds: Dataset, j: int) -> np.ndarray:
    return np.bincount(ds.rows[:, j], minlength=ds.schema.attributes[j].cardinality)


def marginal_tv(a: Dataset, b: Dataset) -> dict[str, float]:
    """Per-attribute total-variation distance between empirical marginals."""
    out = {}
    for j, attr in enumerate(a.schema.attributes):
        pa = value_counts(a, j) / max(len(a), 1)
        pb = value_counts(b, j) / max(len(b), 1)
        out[attr.name] = 0.5 * float(np.abs(pa - pb).sum())
    return out
