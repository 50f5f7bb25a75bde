"""Jaccard distances between original and synthetic anomalous subgroups."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from .biasscan import ScanResult
from .errors import SchemaError
from .tabular import AttributeSchema, Dataset

MAX_LISTED_KEYS = 100


def jaccard_distance(x, y) -> float:
    """1 - |X & Y| / |X | Y|, with two empty sets at distance 0."""
    x, y = set(x), set(y)
    union = len(x | y)
    if union == 0:
        return 0.0
    return 1.0 - len(x & y) / union


def multiset_jaccard_distance(x: Counter, y: Counter) -> float:
    """1 - sum(min counts) / sum(max counts), two empty multisets at distance 0."""
    keys = x.keys() | y.keys()
    union = sum(max(x[k], y[k]) for k in keys)
    if union == 0:
        return 0.0
    return 1.0 - sum(min(x[k], y[k]) for k in keys) / union


def record_tuples(ds: Dataset, indices, include_label: bool = False) -> list:
    tuples = ds.record_tuples(indices)
    if include_label:
        names = ds.schema.label_values
        tuples = [t + (names[ds.labels[i]],) for t, i in zip(tuples, indices)]
    return tuples


def record_keys(ds: Dataset, indices, include_label: bool = False) -> frozenset:
    """Distinct value-name tuples of the given records."""
    return frozenset(record_tuples(ds, indices, include_label))


def attr_value_pairs(result: ScanResult, schema: AttributeSchema) -> frozenset:
    """(attribute, value) pairs of the restricted modes; unrestricted modes add none."""
    pairs = set()
    for attr, vals in zip(schema.attributes, result.subgroup):
        if len(vals) < attr.cardinality:
            pairs.update((attr.name, attr.values[v]) for v in vals)
    return frozenset(pairs)


@dataclass
class Overlap:
    distance: float
    size_a: int
    size_b: int
    intersection: int
    shared: list
    both_empty: bool = False
    multiset_distance: float | None = None  # records only: duplicates counted

    def to_dict(self) -> dict:
        return {
            "distance": repr(float(self.distance)),
            "size_original": self.size_a,
            "size_synthetic": self.size_b,
            "intersection": self.intersection,
            "union": self.size_a + self.size_b - self.intersection,
            "both_empty": self.both_empty,
            "shared": [list(s) for s in self.shared],
        } | ({} if self.multiset_distance is None
             else {"multiset_distance": repr(float(self.multiset_distance))})


def _compatible(a: AttributeSchema, b: AttributeSchema):
    if a.names != b.names or [x.values for x in a.attributes] != [x.values for x in b.attributes]:
        raise SchemaError("original and synthetic schemas differ")


def _overlap(x: frozenset, y: frozenset, limit=None) -> Overlap:
    shared = sorted(x & y)
    if limit is not None:
        shared = shared[:limit]
    return Overlap(jaccard_distance(x, y), len(x), len(y), len(x & y), shared,
                   both_empty=not x and not y)


def record_overlap(orig_ds: Dataset, orig: ScanResult, synth_ds: Dataset, synth: ScanResult,
                   include_label: bool = False) -> Overlap:
    """Record-level distance between the two subgroups' member value tuples.

    ``distance`` uses deduplicated tuples; ``multiset_distance`` keeps one
    entry per member record.
    """
    _compatible(orig_ds.schema, synth_ds.schema)
    x = Counter(record_tuples(orig_ds, orig.member_indices, include_label))
    y = Counter(record_tuples(synth_ds, synth.member_indices, include_label))
    o = _overlap(frozenset(x), frozenset(y), MAX_LISTED_KEYS)
    o.multiset_distance = multiset_jaccard_distance(x, y)
    return o


def attr_value_overlap(orig: ScanResult, synth: ScanResult, schema: AttributeSchema) -> Overlap:
    return _overlap(attr_value_pairs(orig, schema), attr_value_pairs(synth, schema))
