"""Bias scan: find the axis-aligned subgroup whose outcomes diverge most from
a classifier's predicted probabilities.

The score of a record set S at odds multiplier q is the Bernoulli log
likelihood ratio

    F(S, q) = log(q) * sum_{i in S} y_i - sum_{i in S} log(1 - p_i + q p_i)

and the subgroup score is its maximum over q (q >= 1 when scanning for
under-predicted, "over"-risked groups; q <= 1 for the opposite direction).

Each attribute's value set is optimized exactly by a linear-time subset scan:
a value's contribution to F(S, q) is concave in log q and zero at q = 1, so
it is positive on an interval (1, r_v).  The best value set for any fixed q
is therefore {v : r_v > q}, a prefix of the values sorted by r_v, and only
the k prefixes need to be scored.  Coordinate ascent over attributes with
random restarts searches the joint space.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._core import scan as _kernels
from .errors import CapacityError, SchemaError
from .seeding import rng as _rng
from .tabular import Dataset

OVER, UNDER = "over", "under"
DEFAULT_Q_CAP = 1e6
# minimum score gain that counts as an improvement during coordinate ascent
IMPROVE_TOL = 1e-12
BRUTE_FORCE_LIMIT = 10**6


def _sign(direction: str) -> int:
    if direction == OVER:
        return 1
    if direction == UNDER:
        return -1
    raise ValueError(f"direction must be 'over' or 'under', got {direction!r}")


Subgroup = tuple  # tuple[tuple[int, ...], ...]: sorted value indices per attribute


def full_subgroup(cardinalities: Sequence[int]) -> Subgroup:
    return tuple(tuple(range(k)) for k in cardinalities)


def validate_subgroup(subgroup: Subgroup, cardinalities: Sequence[int]) -> None:
    if len(subgroup) != len(cardinalities):
        raise SchemaError(f"subgroup has {len(subgroup)} modes, schema has {len(cardinalities)}")
    for j, (vals, k) in enumerate(zip(subgroup, cardinalities)):
        if not vals:
            raise SchemaError(f"subgroup mode {j} is empty")
        if min(vals) < 0 or max(vals) >= k:
            raise SchemaError(f"subgroup mode {j} has values outside [0, {k})")


@dataclass(frozen=True)
class QFit:
    q: float
    score: float
    boundary: bool = False


@dataclass(eq=False)
class ScanResult:
    subgroup: Subgroup
    score: float
    q: float
    direction: str
    member_indices: np.ndarray
    restarts_used: int
    boundary: bool = False
    q_cap: float = DEFAULT_Q_CAP
    restart_scores: list = field(default_factory=list)
    restart_sweeps: list = field(default_factory=list)

    def unrestricted(self, cardinalities: Sequence[int]) -> list[bool]:
        return [len(v) == k for v, k in zip(self.subgroup, cardinalities)]

    def describe(self, schema) -> dict[str, list[str]]:
        """Value names of the restricted modes only."""
        out = {}
        for attr, vals in zip(schema.attributes, self.subgroup):
            if len(vals) < attr.cardinality:
                out[attr.name] = [attr.values[v] for v in vals]
        return out

    def to_dict(self, schema) -> dict:
        unrestricted = self.unrestricted(schema.cardinalities)
        return {
            "direction": self.direction,
            "score": repr(float(self.score)),
            "q": repr(float(self.q)),
            "q_cap": repr(float(self.q_cap)),
            "boundary": bool(self.boundary),
            "subgroup": {
                a.name: {"values": [a.values[v] for v in vals], "unrestricted": u}
                for a, vals, u in zip(schema.attributes, self.subgroup, unrestricted)
            },
            "n_members": int(len(self.member_indices)),
            "member_indices": [int(i) for i in self.member_indices],
            "restarts": {
                "used": int(self.restarts_used),
                "scores": [repr(float(s)) for s in self.restart_scores],
                "sweeps": [int(s) for s in self.restart_sweeps],
            },
        }

    @classmethod
    def from_dict(cls, d: dict, schema) -> "ScanResult":
        subgroup = tuple(
            tuple(sorted(a.values.index(v) for v in d["subgroup"][a.name]["values"]))
            for a in schema.attributes
        )
        return cls(
            subgroup=subgroup,
            score=float(d["score"]),
            q=float(d["q"]),
            direction=d["direction"],
            member_indices=np.asarray(d["member_indices"], dtype=np.int64),
            restarts_used=int(d["restarts"]["used"]),
            boundary=bool(d["boundary"]),
            q_cap=float(d["q_cap"]),
            restart_scores=[float(s) for s in d["restarts"]["scores"]],
            restart_sweeps=list(d["restarts"]["sweeps"]),
        )

    def to_json(self, schema) -> str:
        return json.dumps(self.to_dict(schema), indent=1) + "\n"


def _as_arrays(labels, probs):
    y = np.asarray(labels, dtype=np.float64)
    p = np.asarray(probs, dtype=np.float64)
    if y.shape != p.shape:
        raise ValueError(f"labels {y.shape} and probs {p.shape} are not aligned")
    return y, p


def bias_score(labels, probs, q: float) -> float:
    """F(S, q) for the records given; 0 for an empty set."""
    if not q > 0:
        raise ValueError(f"q must be positive, got {q}")
    y, p = _as_arrays(labels, probs)
    if y.size == 0:
        return 0.0
    return float(y.sum()) * math.log(q) - float(np.sum(np.log1p(p * (q - 1.0))))


def optimize_q(labels, probs, direction: str = OVER, q_cap: float = DEFAULT_Q_CAP) -> QFit:
    """Maximise :func:`bias_score` over q in [1, q_cap] (over) or [1/q_cap, 1] (under).

    The interior optimum is the root of sum q p/(1 - p + q p) = sum y, found by
    bisection in log q.  A set whose labels are all 1 (over) or all 0 (under)
    has its supremum at the boundary; the limiting score is reported with q
    set to the cap and ``boundary=True``.
    """
    y, p = _as_arrays(labels, probs)
    q, score, boundary = _kernels.fit_q(p, float(y.sum()), _sign(direction), float(q_cap))
    return QFit(float(q), float(score), bool(boundary))


def rescore(labels, probs, fit: QFit) -> float:
    """Recompute a fitted score from its records, honouring boundary limits."""
    y, p = _as_arrays(labels, probs)
    if fit.boundary:
        return float(-np.sum(np.log(p))) if fit.q > 1 else float(-np.sum(np.log1p(-p)))
    return bias_score(y, p, fit.q)


def subgroup_mask(rows: np.ndarray, subgroup: Subgroup, cardinalities: Sequence[int]) -> np.ndarray:
    mask = np.ones(rows.shape[0], dtype=bool)
    for j, (vals, k) in enumerate(zip(subgroup, cardinalities)):
        if len(vals) == k:
            continue
        allowed = np.zeros(k, dtype=bool)
        allowed[list(vals)] = True
        mask &= allowed[rows[:, j]]
    return mask


def subgroup_members(ds: Dataset, subgroup: Subgroup) -> np.ndarray:
    """Indices of records whose every attribute value lies in the subgroup."""
    validate_subgroup(subgroup, ds.schema.cardinalities)
    return np.flatnonzero(subgroup_mask(ds.rows, subgroup, ds.schema.cardinalities))


def optimize_mode_arrays(values: np.ndarray, probs: np.ndarray, labels: np.ndarray, k: int,
                         direction: str = OVER, q_cap: float = DEFAULT_Q_CAP):
    """Exact best nonempty value set for one mode over already-restricted records.

    ``values`` holds each record's code in the mode being optimized.
    Returns ``(value_tuple, QFit)``.  On equal scores the longer prefix wins,
    so a scoreless mode comes back unrestricted.
    """
    d = _sign(direction)
    values = np.asarray(values, dtype=np.int64)
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    counts = np.bincount(values, minlength=k)
    offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    p_sorted = p[order]
    y_cells = np.bincount(values, weights=y, minlength=k)
    pri = _kernels.cell_priorities(p_sorted, offsets, y_cells, d, float(q_cap))
    # never-positive cells after eligible ones, empty cells last
    cell_order = np.lexsort((np.arange(k), counts == 0, -pri))
    segments = [p_sorted[offsets[c]:offsets[c + 1]] for c in cell_order]
    p_perm = np.concatenate(segments) if segments else p_sorted
    ends = np.cumsum(counts[cell_order]).astype(np.int64)
    y_cum = np.cumsum(y_cells[cell_order])
    qs, scores, boundary = _kernels.prefix_scan(p_perm, ends, y_cum, d, float(q_cap))
    best = k - 1
    for j in range(k - 2, -1, -1):
        if scores[j] > scores[best]:
            best = j
    chosen = tuple(sorted(int(c) for c in cell_order[:best + 1]))
    return chosen, QFit(float(qs[best]), float(scores[best]), bool(boundary[best]))


def optimize_mode(ds: Dataset, probs, current: Subgroup, mode: int, direction: str = OVER,
                  q_cap: float = DEFAULT_Q_CAP):
    """Best value set for ``mode`` holding the other modes of ``current`` fixed.

    Returns ``(value_tuple, q, score)``.
    """
    cards = ds.schema.cardinalities
    validate_subgroup(current, cards)
    others = tuple(v if j != mode else tuple(range(cards[mode])) for j, v in enumerate(current))
    mask = subgroup_mask(ds.rows, others, cards)
    vals, fit = optimize_mode_arrays(ds.rows[mask, mode], np.asarray(probs)[mask],
                                     ds.labels[mask], cards[mode], direction, q_cap)
    return vals, fit.q, fit.score


class _ScanState:
    """Membership bookkeeping for coordinate ascent.

    ``fails[i]`` counts the modes whose selection excludes record i, so
    records restricted on every mode but j are those with
    ``fails - excluded_j == 0``.
    """

    def __init__(self, rows, cards, subgroup):
        self.rows = rows
        self.cards = cards
        self.excluded = []
        for j, vals in enumerate(subgroup):
            allowed = np.zeros(cards[j], dtype=bool)
            allowed[list(vals)] = True
            self.excluded.append(~allowed[rows[:, j]])
        self.fails = np.sum(self.excluded, axis=0, dtype=np.int64) if self.excluded else \
            np.zeros(rows.shape[0], np.int64)

    def mask_without(self, j):
        return (self.fails - self.excluded[j]) == 0

    def members(self):
        return self.fails == 0

    def set_mode(self, j, vals):
        allowed = np.zeros(self.cards[j], dtype=bool)
        allowed[list(vals)] = True
        new = ~allowed[self.rows[:, j]]
        self.fails += new.astype(np.int64) - self.excluded[j]
        self.excluded[j] = new


def _random_subgroup(gen: np.random.Generator, cards) -> Subgroup:
    out = []
    for k in cards:
        while True:
            pick = gen.random(k) < 0.5
            if pick.any():
                break
        out.append(tuple(int(v) for v in np.flatnonzero(pick)))
    return tuple(out)


def _ascend(rows, probs, labels, cards, start, direction, q_cap, gen, max_sweeps=1000):
    """Coordinate ascent from ``start``; returns (subgroup, fit, sweeps, start_score)."""
    state = _ScanState(rows, cards, start)
    m = state.members()
    fit = optimize_q(labels[m], probs[m], direction, q_cap)
    start_score = fit.score
    current = list(start)
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        improved = False
        for j in gen.permutation(len(cards)):
            mask = state.mask_without(j)
            vals, cand = optimize_mode_arrays(rows[mask, j], probs[mask], labels[mask],
                                              cards[j], direction, q_cap)
            if cand.score > fit.score + IMPROVE_TOL * max(1.0, abs(fit.score)):
                current[j] = vals
                state.set_mode(j, vals)
                fit = cand
                improved = True
        if not improved:
            break
    return tuple(current), fit, sweeps, start_score


def bias_scan(ds: Dataset, probs, direction: str = OVER, n_restarts: int = 10, seed: int = 0,
              q_cap: float = DEFAULT_Q_CAP) -> ScanResult:
    """Multi-restart coordinate ascent over attributes, each step an exact mode scan.

    Restart r draws its own generator from ``(seed, r)``, so restarts are
    independent of each other and of execution order.  The best restart wins;
    ties keep the earliest.
    """
    if n_restarts < 1:
        raise ValueError(f"n_restarts must be >= 1, got {n_restarts}")
    _sign(direction)
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != (len(ds),):
        raise ValueError(f"probs shape {probs.shape} does not match {len(ds)} records")
    labels = ds.labels.astype(np.float64)
    cards = ds.schema.cardinalities
    best = None
    scores, sweeps_used = [], []
    for r in range(n_restarts):
        gen = _rng(seed, "restart", r)
        start = _random_subgroup(gen, cards)
        sub, fit, sweeps, _ = _ascend(ds.rows, probs, labels, cards, start, direction, q_cap, gen)
        scores.append(fit.score)
        sweeps_used.append(sweeps)
        if best is None or fit.score > best[1].score:
            best = (sub, fit)
    sub, fit = best
    members = np.flatnonzero(subgroup_mask(ds.rows, sub, cards))
    return ScanResult(sub, fit.score, fit.q, direction, members, n_restarts, fit.boundary,
                      q_cap, scores, sweeps_used)


def _nonempty_subsets(k):
    for r in range(1, k + 1):
        yield from itertools.combinations(range(k), r)


def brute_force_scan(ds: Dataset, probs, direction: str = OVER,
                     q_cap: float = DEFAULT_Q_CAP) -> ScanResult:
    """Exhaustive maximisation over every axis-aligned subgroup (test oracle).

    Ties go to the lexicographically smallest subgroup.
    """
    cards = ds.schema.cardinalities
    total = math.prod(2**k - 1 for k in cards)
    if total > BRUTE_FORCE_LIMIT:
        raise CapacityError(f"{total} subgroups exceed the brute-force limit {BRUTE_FORCE_LIMIT}")
    probs = np.asarray(probs, dtype=np.float64)
    labels = ds.labels.astype(np.float64)
    per_mode = [sorted(_nonempty_subsets(k)) for k in cards]
    best = None
    evaluated = 0
    for sub in itertools.product(*per_mode):
        m = subgroup_mask(ds.rows, sub, cards)
        fit = optimize_q(labels[m], probs[m], direction, q_cap)
        evaluated += 1
        if best is None or fit.score > best[1].score:
            best = (sub, fit)
    sub, fit = best
    members = np.flatnonzero(subgroup_mask(ds.rows, sub, cards))
    res = ScanResult(sub, fit.score, fit.q, direction, members, 0, fit.boundary, q_cap)
    res.evaluated = evaluated
    return res


def brute_force_mode(values, probs, labels, k, direction=OVER, q_cap=DEFAULT_Q_CAP):
    """Exhaustive best value set for one mode (test oracle for the prefix scan)."""
    values = np.asarray(values)
    labels = np.asarray(labels, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    best = None
    for sub in _nonempty_subsets(k):
        m = np.isin(values, sub)
        fit = optimize_q(labels[m], probs[m], direction, q_cap)
        if best is None or fit.score > best[1].score:
            best = (sub, fit)
    return best


def permutation_null(ds: Dataset, probs, n_perm: int = 100, seed: int = 0, **scan_kw) -> np.ndarray:
    """Scan scores under label permutations, for significance checks in tests."""
    gen = np.random.default_rng(seed)
    out = np.empty(n_perm)
    for b in range(n_perm):
        shuffled = Dataset(ds.schema, ds.rows, gen.permutation(ds.labels))
        out[b] = bias_scan(shuffled, probs, seed=seed + b + 1, **scan_kw).score
    return out
