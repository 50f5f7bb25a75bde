"""Random forest and gradient-boosted tree binary classifiers."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import SchemaError, TrainingError
from ..seeding import rng as _rng
from ..tabular import AttributeSchema, Dataset
from .trees import Tree, grow_tree

EPS = 1e-6
UNLIMITED_DEPTH = 64


def clamp(p) -> np.ndarray:
    return np.clip(np.asarray(p, dtype=np.float64), EPS, 1.0 - EPS)


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    return np.exp(-np.logaddexp(0.0, -z))


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    return np.log(p) - np.log1p(-p)


def _check_trainable(ds: Dataset):
    if len(ds) < 2:
        raise TrainingError(f"need at least 2 records to train, got {len(ds)}")
    pos = int(ds.labels.sum())
    if pos == 0 or pos == len(ds):
        raise TrainingError("training labels contain a single class")


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int | None = None
    min_leaf: int = 1
    features_per_split: int | None = None  # None: ceil(sqrt(#attributes))

    def size_key(self):
        return (self.n_trees, self.max_depth if self.max_depth is not None else UNLIMITED_DEPTH)


@dataclass(frozen=True)
class GbtParams:
    n_rounds: int = 100
    learning_rate: float = 0.1
    max_depth: int = 3
    min_leaf: int = 1
    reg_lambda: float = 0.0
    base_score: float | None = None  # None: log-odds of the training prior

    def __post_init__(self):
        if self.n_rounds < 0:
            raise ValueError("n_rounds must be >= 0")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")

    def size_key(self):
        return (self.n_rounds, self.max_depth)


@dataclass(eq=False)
class ForestModel:
    trees: list
    params: ForestParams
    seed: int
    schema: AttributeSchema

    kind = "random_forest"

    def tree_predictions(self, rows) -> np.ndarray:
        return np.stack([t.predict(rows) for t in self.trees])


@dataclass(eq=False)
class GbtModel:
    trees: list
    base_score: float
    params: GbtParams
    seed: int
    schema: AttributeSchema
    train_loss: list = field(default_factory=list)

    kind = "gbt"

    def decision_function(self, rows) -> np.ndarray:
        z = np.full(rows.shape[0], self.base_score)
        for t in self.trees:
            z += t.predict(rows)
        return z


def fit_random_forest(ds: Dataset, params: ForestParams = ForestParams(), seed: int = 0) -> ForestModel:
    """Bootstrap-sampled Gini trees with per-node attribute sampling."""
    _check_trainable(ds)
    if params.n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    n, m = ds.rows.shape
    mtry = params.features_per_split or max(1, math.ceil(math.sqrt(m)))
    depth = UNLIMITED_DEPTH if params.max_depth is None else params.max_depth
    y = ds.labels.astype(np.float64)
    trees = []
    for t in range(params.n_trees):
        gen = _rng(seed, "tree", t)
        weights = np.bincount(gen.integers(0, n, n), minlength=n).astype(np.float64)
        tree, _ = grow_tree(ds.rows, ds.schema.cardinalities, y, weights, depth,
                            params.min_leaf, mtry, gen)
        trees.append(tree)
    return ForestModel(trees, params, seed, ds.schema)


def _logloss(y, z):
    # mean of log(1 + e^z) - y z
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def fit_gbt(ds: Dataset, params: GbtParams = GbtParams(), seed: int = 0) -> GbtModel:
    """Stage-wise logistic boosting.

    Each round grows a least-squares tree on the residuals y - p, then sets
    every leaf to the Newton step sum(y - p) / (sum p(1 - p) + lambda),
    scaled by the learning rate.
    """
    _check_trainable(ds)
    y = ds.labels.astype(np.float64)
    n = len(y)
    prior = y.mean()
    base = math.log(prior / (1 - prior)) if params.base_score is None else float(params.base_score)
    z = np.full(n, base)
    ones = np.ones(n)
    trees, losses = [], [_logloss(y, z)]
    for r in range(params.n_rounds):
        p = sigmoid(z)
        resid = y - p
        tree, leaf_of = grow_tree(ds.rows, ds.schema.cardinalities, resid, ones,
                                  params.max_depth, params.min_leaf)
        k = tree.n_nodes
        g = np.bincount(leaf_of, weights=resid, minlength=k)
        h = np.bincount(leaf_of, weights=p * (1 - p), minlength=k)
        step = np.divide(g, h + params.reg_lambda, out=np.zeros(k), where=(h + params.reg_lambda) > 0)
        tree.value = params.learning_rate * step
        z = z + tree.value[leaf_of]
        trees.append(tree)
        losses.append(_logloss(y, z))
    return GbtModel(trees, base, params, seed, ds.schema, losses)


def _check_schema(model, ds: Dataset):
    if model.schema.cardinalities != ds.schema.cardinalities or model.schema.names != ds.schema.names:
        raise SchemaError("dataset schema does not match the model's training schema")


def predict_proba(model, ds: Dataset) -> np.ndarray:
    """Per-record probability of label 1, clamped to [1e-6, 1 - 1e-6]."""
    _check_schema(model, ds)
    if isinstance(model, ForestModel):
        return clamp(model.tree_predictions(ds.rows).mean(axis=0))
    if isinstance(model, GbtModel):
        return clamp(sigmoid(model.decision_function(ds.rows)))
    raise TypeError(f"unsupported model {type(model).__name__}")


def fit_model(kind: str, ds: Dataset, params, seed: int):
    if kind == "random_forest":
        return fit_random_forest(ds, params, seed)
    if kind == "gbt":
        return fit_gbt(ds, params, seed)
    raise ValueError(f"unknown model kind {kind!r}")


def params_from_dict(kind: str, d: dict):
    cls = {"random_forest": ForestParams, "gbt": GbtParams}[kind]
    return cls(**d)


def model_to_dict(model) -> dict:
    out = {
        "kind": model.kind,
        "params": asdict(model.params),
        "seed": model.seed,
        "schema": model.schema.to_dict(),
        "trees": [t.to_dict() for t in model.trees],
    }
    if isinstance(model, GbtModel):
        out["base_score"] = repr(float(model.base_score))
        out["train_loss"] = [repr(float(v)) for v in model.train_loss]
    return out


def model_from_dict(d: dict):
    schema = AttributeSchema.from_dict(d["schema"])
    trees = [Tree.from_dict(t) for t in d["trees"]]
    params = params_from_dict(d["kind"], d["params"])
    if d["kind"] == "random_forest":
        return ForestModel(trees, params, d["seed"], schema)
    return GbtModel(trees, float(d["base_score"]), params, d["seed"], schema,
                    [float(v) for v in d.get("train_loss", [])])
