import csv

import numpy as np
import pytest

from ugdp.tabular import Attribute, AttributeSchema, Dataset


def make_schema(cards, label="y"):
    attrs = [Attribute(f"a{j}", tuple(f"v{j}_{i}" for i in range(k))) for j, k in enumerate(cards)]
    return AttributeSchema(tuple(attrs), label)


def random_dataset(n, cards, seed=0, p=None):
    """Uniform random rows; labels drawn from ``p`` (a per-record vector) or 0.5."""
    g = np.random.default_rng(seed)
    rows = np.column_stack([g.integers(0, k, n) for k in cards]).astype(np.int64)
    probs = np.full(n, 0.5) if p is None else p(rows)
    labels = (g.random(n) < probs).astype(np.int8)
    return Dataset(make_schema(cards), rows, labels)


def planted_dataset(n=3000, seed=0):
    """2 attributes x 3 values; cell (0, 1) has y ~ Bernoulli(0.9) but p-hat 0.3."""
    g = np.random.default_rng(seed)
    rows = g.integers(0, 3, (n, 2)).astype(np.int64)
    p = g.uniform(0.2, 0.6, n)
    planted = (rows[:, 0] == 0) & (rows[:, 1] == 1)
    p[planted] = 0.3
    true = np.where(planted, 0.9, p)
    labels = (g.random(n) < true).astype(np.int8)
    return Dataset(make_schema([3, 3]), rows, labels), p


def small_vae_config(**kw):
    base = dict(n_latent=4, n_categories=3, hidden_sizes=(16,), epochs=30, batch_size=32, seed=3)
    base.update(kw)
    from ugdp.synth import VaeConfig

    return VaeConfig(**base)


def structured_dataset(n=200, seed=0):
    """The 200-record VAE fixture."""
    # a1 copies a0 most of the time, so there is structure to learn
    g = np.random.default_rng(seed)
    a0 = g.integers(0, 4, n)
    a1 = np.where(g.random(n) < 0.8, a0 % 3, g.integers(0, 3, n))
    a2 = g.integers(0, 2, n)
    labels = ((a0 == 1) ^ (g.random(n) < 0.1)).astype(np.int8)
    return Dataset(make_schema([4, 3, 2]), np.column_stack([a0, a1, a2]), labels)


def write_rows(path, header, rows, delimiter=","):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def toy_csv(path, n=600, seed=1):
    """Three categorical attributes with a label driven by A and C."""
    g = np.random.default_rng(seed)
    rows = []
    for _ in range(n):
        a = g.choice(["a0", "a1", "a2"])
        b = g.choice(["b0", "b1"])
        c = g.choice(["c0", "c1", "c2", "c3"])
        p = 0.15 + 0.6 * (a == "a1") + 0.2 * (c == "c3")
        rows.append([a, b, c, "yes" if g.random() < p else "no"])
    write_rows(path, ["A", "B", "C", "y"], rows)
    return path


def toy_config(data_path, out="out", m=2):
    return {
        "data": {"path": str(data_path), "positive_label": "yes"},
        "models": {"cv_folds": 3, "grids": {
            "random_forest": {"n_trees": [10], "min_leaf": [5]},
            "gbt": {"n_rounds": [20], "max_depth": [2]}}},
        "scan": {"n_restarts": 3},
        "synthesis": {"m": m, "vae": {"epochs": 3, "n_latent": 4, "n_categories": 3,
                                      "hidden_sizes": [16]}},
        "output_dir": str(out),
    }


@pytest.fixture
def toy_data(tmp_path):
    return toy_csv(tmp_path / "toy.csv")


def vae_gradient_check(seed=0, h=1e-5):
    """Worst relative error between analytic and central-difference gradients
    of the total loss on a tiny network with frozen Gumbel noise.

    h near the cube root of machine epsilon balances truncation against
    rounding in the central difference.
    """
    from ugdp import synth

    ds = random_dataset(6, [3, 2], seed=seed)
    cfg = synth.VaeConfig(n_latent=2, n_categories=3, hidden_sizes=(4,), seed=seed)
    params = synth.init_vae(ds.schema, True, cfg)
    g = np.random.default_rng(seed + 100)
    for k in params.arrays:
        if ".b" in k:
            params.arrays[k] = g.normal(0, 0.5, params.arrays[k].shape)
    x = __import__("ugdp.tabular", fromlist=["one_hot"]).one_hot(ds, True).data
    assert x.shape[1] <= 8
    u = g.random((len(ds), 2, 3))
    _, _, _, grads = synth.vae_loss(params, x, 0.7, u)
    worst = 0.0
    for k, arr in params.arrays.items():
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            up = synth.vae_loss(params, x, 0.7, u, with_grad=False)[0]
            arr[idx] = old - h
            down = synth.vae_loss(params, x, 0.7, u, with_grad=False)[0]
            arr[idx] = old
            num = (up - down) / (2 * h)
            ana = grads[k][idx]
            denom = max(abs(num), abs(ana), 1e-6)
            worst = max(worst, abs(num - ana) / denom)
    return worst
