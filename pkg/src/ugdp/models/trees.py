"""Level-wise growth of binary trees over categorical attributes.

A split sends records whose value lies in a value subset to the left child.
Candidate subsets are prefixes of the node's observed values sorted by mean
target: for a 0/1 target under Gini, and for any target under squared
error, the best two-way partition of a categorical attribute is always such a
prefix, so k - 1 candidates per attribute suffice.

Both criteria reduce to the between-child sum of squares
``s_L^2/c_L + s_R^2/c_R - s^2/c`` (Gini decrease is exactly twice this for a
0/1 target), so one grower serves the forest and the boosted model.  All
nodes of a level are split together with array operations.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MIN_GAIN = 1e-12


@dataclass(frozen=True)
class TreeNode:
    """One node, as exposed by :meth:`Tree.node`."""

    feature: int | None
    values: tuple[int, ...] | None  # value subset routed left
    left: int | None
    right: int | None
    value: float
    depth: int


class Tree:
    """Flat array storage; node 0 is the root, leaves have ``feature == -1``."""

    def __init__(self, feature, left, right, value, go_left, depth):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=np.float64)
        self.go_left = np.asarray(go_left, dtype=bool)  # (n_nodes, max cardinality)
        self.depth = np.asarray(depth, dtype=np.int64)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def max_depth(self) -> int:
        return int(self.depth.max())

    def node(self, i: int) -> TreeNode:
        f = int(self.feature[i])
        if f < 0:
            return TreeNode(None, None, None, None, float(self.value[i]), int(self.depth[i]))
        vals = tuple(int(v) for v in np.flatnonzero(self.go_left[i]))
        return TreeNode(f, vals, int(self.left[i]), int(self.right[i]), float(self.value[i]),
                        int(self.depth[i]))

    def apply(self, rows: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row."""
        node = np.zeros(rows.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        width = self.go_left.shape[1]
        while active.size:
            nid = node[active]
            f = self.feature[nid]
            v = rows[active, f]
            ok = v < width
            left = np.zeros(active.size, dtype=bool)
            left[ok] = self.go_left[nid[ok], v[ok]]
            node[active] = np.where(left, self.left[nid], self.right[nid])
            active = active[self.feature[node[active]] >= 0]
        return node

    def predict(self, rows: np.ndarray) -> np.ndarray:
        return self.value[self.apply(rows)]

    def to_dict(self) -> dict:
        nodes = []
        for i in range(self.n_nodes):
            n = self.node(i)
            if n.feature is None:
                nodes.append({"leaf": repr(n.value), "depth": n.depth})
            else:
                nodes.append({"feature": n.feature, "values": list(n.values), "left": n.left,
                              "right": n.right, "value": repr(n.value), "depth": n.depth})
        return {"width": int(self.go_left.shape[1]), "nodes": nodes}

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        nodes = d["nodes"]
        k = len(nodes)
        feature, left, right = np.full(k, -1), np.full(k, -1), np.full(k, -1)
        value, depth = np.zeros(k), np.zeros(k, dtype=np.int64)
        go_left = np.zeros((k, d["width"]), dtype=bool)
        for i, n in enumerate(nodes):
            depth[i] = n["depth"]
            if "leaf" in n:
                value[i] = float(n["leaf"])
            else:
                feature[i], left[i], right[i] = n["feature"], n["left"], n["right"]
                value[i] = float(n["value"])
                go_left[i, n["values"]] = True
        return cls(feature, left, right, value, go_left, depth)


def grow_tree(rows: np.ndarray, cards, target: np.ndarray, weights: np.ndarray,
              max_depth: int, min_leaf: float, max_features: int | None = None,
              rng: np.random.Generator | None = None):
    """Grow a tree maximising between-child sum of squares of ``target``.

    ``weights`` are record multiplicities (bootstrap counts or ones); records
    with zero weight are ignored.  ``max_features`` attributes are drawn per
    node when given.  Returns ``(tree, leaf_of)`` where ``leaf_of`` maps each
    record to its final node; node values are left as the weighted target
    mean and callers overwrite them as needed.
    """
    n, m = rows.shape
    kmax = max(max(cards), 1) if len(cards) else 1
    target = np.asarray(target, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    wt = w * target

    feature, left, right, depth_of, go_left = [-1], [-1], [-1], [0], [np.zeros(kmax, bool)]
    node_of = np.zeros(n, dtype=np.int64)
    frontier = np.array([0])
    in_bag = w > 0
    depth = 0
    while frontier.size and depth < max_depth:
        A = frontier.size
        local = np.full(len(feature), -1, dtype=np.int64)
        local[frontier] = np.arange(A)
        rec = np.flatnonzero(in_bag & (local[node_of] >= 0))
        if rec.size == 0:
            break
        loc = local[node_of[rec]]
        cnt = np.zeros((A, m, kmax))
        tot = np.zeros((A, m, kmax))
        for f in range(m):
            key = loc * kmax + rows[rec, f]
            cnt[:, f, :] = np.bincount(key, weights=w[rec], minlength=A * kmax).reshape(A, kmax)
            tot[:, f, :] = np.bincount(key, weights=wt[rec], minlength=A * kmax).reshape(A, kmax)
        c_node = cnt[:, 0, :].sum(axis=1) if m else np.zeros(A)
        s_node = tot[:, 0, :].sum(axis=1) if m else np.zeros(A)

        present = cnt > 0
        mean = np.where(present, tot / np.where(present, cnt, 1.0), np.inf)
        order = np.argsort(mean, axis=2, kind="stable")
        c_sorted = np.take_along_axis(cnt, order, axis=2)
        s_sorted = np.take_along_axis(tot, order, axis=2)
        cL = np.cumsum(c_sorted, axis=2)[:, :, :-1]
        sL = np.cumsum(s_sorted, axis=2)[:, :, :-1]
        cR = c_node[:, None, None] - cL
        sR = s_node[:, None, None] - sL
        n_present = present.sum(axis=2)
        prefix_len = np.arange(1, kmax)[None, None, :]
        valid = (prefix_len < n_present[:, :, None]) & (cL >= min_leaf) & (cR >= min_leaf)
        if max_features is not None and max_features < m:
            keys = rng.random((A, m))
            rank = np.argsort(np.argsort(keys, axis=1), axis=1)
            valid &= (rank < max_features)[:, :, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = sL**2 / cL + sR**2 / cR - (s_node**2 / c_node)[:, None, None]
        gain = np.where(valid, gain, -np.inf)
        flat = gain.reshape(A, -1)
        best = np.argmax(flat, axis=1) if flat.shape[1] else np.zeros(A, dtype=np.int64)
        best_gain = flat[np.arange(A), best] if flat.shape[1] else np.full(A, -np.inf)
        split = best_gain > MIN_GAIN * np.maximum(1.0, c_node)

        next_frontier = []
        table = np.zeros((len(feature) + 2 * A, kmax), dtype=bool)
        child_left = np.full(len(feature) + 2 * A, -1, dtype=np.int64)
        child_right = np.full(len(feature) + 2 * A, -1, dtype=np.int64)
        split_feat = np.full(len(feature) + 2 * A, -1, dtype=np.int64)
        for a in np.flatnonzero(split):
            nid = frontier[a]
            f, j = divmod(int(best[a]), kmax - 1)
            vals = order[a, f, :j + 1]
            mask = np.zeros(kmax, dtype=bool)
            mask[vals] = True
            li, ri = len(feature), len(feature) + 1
            feature[nid], left[nid], right[nid] = f, li, ri
            go_left[nid] = mask
            for _ in range(2):
                feature.append(-1)
                left.append(-1)
                right.append(-1)
                depth_of.append(depth + 1)
                go_left.append(np.zeros(kmax, bool))
            table[nid] = mask
            child_left[nid], child_right[nid], split_feat[nid] = li, ri, f
            next_frontier += [li, ri]
        moving = np.flatnonzero(split_feat[node_of] >= 0)
        if moving.size:
            nid = node_of[moving]
            to_left = table[nid, rows[moving, split_feat[nid]]]
            node_of[moving] = np.where(to_left, child_left[nid], child_right[nid])
        frontier = np.array(next_frontier, dtype=np.int64)
        depth += 1

    k = len(feature)
    c_leaf = np.bincount(node_of, weights=w, minlength=k)
    s_leaf = np.bincount(node_of, weights=wt, minlength=k)
    value = np.divide(s_leaf, c_leaf, out=np.zeros(k), where=c_leaf > 0)
    tree = Tree(feature, left, right, value, np.array(go_left).reshape(k, kmax), depth_of)
    return tree, node_of
