"""Categorical VAE for one-hot tabular data, trained with Gumbel-softmax.

The encoder maps a one-hot record to logits for ``n_latent`` categorical
variables of ``n_categories`` classes each; a Gumbel-softmax sample of those
is decoded into one softmax per attribute block.  The loss is the blockwise
cross-entropy plus the KL divergence of the encoder posterior from a uniform
categorical prior.  Forward and backward passes are written out in numpy and
optimized with Adam.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, NumericError
from .seeding import derive_seed, rng as _rng
from .tabular import AttributeSchema, Dataset, one_hot

GUMBEL_EPS = 1e-20


@dataclass(frozen=True)
class VaeConfig:
    n_latent: int = 20
    n_categories: int = 10
    hidden_sizes: tuple = (128,)
    temperature: float = 0.5
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    epochs: int = 50
    batch_size: int = 256
    seed: int = 0
    anneal: tuple | None = None  # (tau_min, rate): tau_e = max(tau_min, tau * exp(-rate e))

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.anneal is not None:
            object.__setattr__(self, "anneal", tuple(float(a) for a in self.anneal))
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ConfigError("beta1 and beta2 must lie in (0, 1)")
        if not self.temperature > 0:
            raise ConfigError("temperature must be positive")
        if self.n_latent < 1 or self.n_categories < 2:
            raise ConfigError("need n_latent >= 1 and n_categories >= 2")
        if any(h < 1 for h in self.hidden_sizes):
            raise ConfigError(f"zero-width hidden layer in {self.hidden_sizes}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")

    def tau(self, epoch: int) -> float:
        if self.anneal is None:
            return self.temperature
        tau_min, rate = self.anneal
        return max(tau_min, self.temperature * math.exp(-rate * epoch))

    @classmethod
    def from_dict(cls, d: dict) -> "VaeConfig":
        return cls(**d)


@dataclass(eq=False)
class VaeParams:
    arrays: dict  # "enc.W0", "enc.b0", ..., "dec.W0", ...
    block_widths: tuple
    n_latent: int
    n_categories: int
    hidden_sizes: tuple

    @property
    def n_enc(self) -> int:
        return len(self.hidden_sizes) + 1

    def copy(self) -> "VaeParams":
        return replace(self, arrays={k: v.copy() for k, v in self.arrays.items()})

    def to_dict(self) -> dict:
        return {
            "block_widths": list(self.block_widths),
            "n_latent": self.n_latent,
            "n_categories": self.n_categories,
            "hidden_sizes": list(self.hidden_sizes),
            "arrays": {k: {"shape": list(v.shape), "data": [repr(float(x)) for x in v.ravel()]}
                       for k, v in self.arrays.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VaeParams":
        arrays = {k: np.array([float(x) for x in a["data"]]).reshape(a["shape"])
                  for k, a in d["arrays"].items()}
        return cls(arrays, tuple(d["block_widths"]), d["n_latent"], d["n_categories"],
                   tuple(d["hidden_sizes"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "VaeParams":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def zeros_like(cls, params: VaeParams) -> "AdamState":
        return cls({k: np.zeros_like(a) for k, a in params.arrays.items()},
                   {k: np.zeros_like(a) for k, a in params.arrays.items()}, 0)


@dataclass
class LossReport:
    recon: list = field(default_factory=list)
    kl: list = field(default_factory=list)
    total: list = field(default_factory=list)
    tau: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {k: [repr(float(v)) for v in vals] for k, vals in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "LossReport":
        return cls(**{k: [float(v) for v in vals] for k, vals in d.items()})


def block_widths(schema: AttributeSchema, include_label: bool) -> tuple:
    return tuple(schema.cardinalities) + ((2,) if include_label else ())


def init_vae(schema: AttributeSchema, include_label: bool, config: VaeConfig) -> VaeParams:
    """Glorot-uniform weights and zero biases, deterministic given ``config.seed``."""
    widths = block_widths(schema, include_label)
    D = int(sum(widths))
    if D < 1:
        raise ConfigError("schema has no columns to encode")
    latent = config.n_latent * config.n_categories
    enc_sizes = [D, *config.hidden_sizes, latent]
    dec_sizes = [latent, *reversed(config.hidden_sizes), D]
    gen = _rng(config.seed, "vae-init")
    arrays = {}
    for prefix, sizes in (("enc", enc_sizes), ("dec", dec_sizes)):
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            arrays[f"{prefix}.W{i}"] = gen.uniform(-limit, limit, (fan_in, fan_out))
            arrays[f"{prefix}.b{i}"] = np.zeros(fan_out)
    return VaeParams(arrays, widths, config.n_latent, config.n_categories, config.hidden_sizes)


def _log_softmax(x, axis=-1):
    x = x - x.max(axis=axis, keepdims=True)
    return x - np.log(np.exp(x).sum(axis=axis, keepdims=True))


def _softmax(x, axis=-1):
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def gumbel_noise(uniform) -> np.ndarray:
    u = np.asarray(uniform, dtype=np.float64)
    return -np.log(-np.log(u + GUMBEL_EPS) + GUMBEL_EPS)


def gumbel_softmax(logits, tau: float, noise) -> np.ndarray:
    """Row-wise softmax((logits + g) / tau) with g = -log(-log u) from uniform ``noise``."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    return _softmax((np.asarray(logits, dtype=np.float64) + gumbel_noise(noise)) / tau, axis=-1)


def blockwise_log_softmax(logits, widths) -> np.ndarray:
    out = np.empty_like(logits)
    off = 0
    for w in widths:
        out[:, off:off + w] = _log_softmax(logits[:, off:off + w])
        off += w
    return out


def _mlp_forward(params, prefix, n_layers, x):
    """Returns the output pre-activation and the cache of layer inputs/pre-activations."""
    cache = []
    h = x
    for i in range(n_layers):
        a = h @ params[f"{prefix}.W{i}"] + params[f"{prefix}.b{i}"]
        cache.append((h, a))
        h = np.maximum(a, 0.0) if i < n_layers - 1 else a
    return h, cache


def _mlp_backward(params, prefix, n_layers, cache, d_out, grads):
    d = d_out
    for i in reversed(range(n_layers)):
        h_in, a = cache[i]
        if i < n_layers - 1:
            d = d * (a > 0)
        grads[f"{prefix}.W{i}"] = h_in.T @ d
        grads[f"{prefix}.b{i}"] = d.sum(axis=0)
        d = d @ params[f"{prefix}.W{i}"].T
    return d


def encode(params: VaeParams, x) -> np.ndarray:
    """Posterior logits, shape (batch, n_latent, n_categories)."""
    logits, _ = _mlp_forward(params.arrays, "enc", params.n_enc, x)
    return logits.reshape(-1, params.n_latent, params.n_categories)


def decode(params: VaeParams, z) -> np.ndarray:
    """Blockwise probabilities over the one-hot columns."""
    out, _ = _mlp_forward(params.arrays, "dec", params.n_enc, z)
    return np.exp(blockwise_log_softmax(out, params.block_widths))


def vae_loss(params: VaeParams, batch, tau: float, noise, with_grad: bool = True):
    """Mean loss over the batch and its gradients.

    Returns ``(total, recon, kl, grads)``; ``noise`` holds uniforms of shape
    (batch, n_latent, n_categories) and is mapped to Gumbel noise.
    """
    x = np.asarray(batch, dtype=np.float64)
    B = x.shape[0]
    if B == 0:
        raise ValueError("empty batch")
    N, K = params.n_latent, params.n_categories
    P = params.arrays
    L = params.n_enc

    enc_out, enc_cache = _mlp_forward(P, "enc", L, x)
    logits = enc_out.reshape(B, N, K)
    log_q = _log_softmax(logits)
    q = np.exp(log_q)
    z = _softmax((logits + gumbel_noise(noise)) / tau)
    dec_out, dec_cache = _mlp_forward(P, "dec", L, z.reshape(B, N * K))
    log_px = blockwise_log_softmax(dec_out, params.block_widths)

    recon = -float(np.sum(x * log_px)) / B
    kl_rows = np.sum(q * (log_q + math.log(K)), axis=(1, 2))
    kl = float(kl_rows.mean())
    total = recon + kl
    if not with_grad:
        return total, recon, kl, None

    grads = {}
    d_dec = (np.exp(log_px) * _block_sums(x, params.block_widths) - x) / B
    dz = _mlp_backward(P, "dec", L, dec_cache, d_dec, grads).reshape(B, N, K)
    d_logits = z * (dz - np.sum(z * dz, axis=2, keepdims=True)) / tau
    neg_ent = np.sum(q * log_q, axis=2, keepdims=True)
    d_logits += q * (log_q - neg_ent) / B
    _mlp_backward(P, "enc", L, enc_cache, d_logits.reshape(B, N * K), grads)
    return total, recon, kl, grads


def _block_sums(x, widths):
    """Per-row target mass of each block, broadcast over the block's columns."""
    out = np.empty_like(x)
    off = 0
    for w in widths:
        out[:, off:off + w] = x[:, off:off + w].sum(axis=1, keepdims=True)
        off += w
    return out


def adam_step(params: VaeParams, grads: dict, state: AdamState, config: VaeConfig):
    """Bias-corrected Adam update; returns new ``(params, state)``."""
    t = state.t + 1
    b1, b2 = config.beta1, config.beta2
    new_arrays, m_new, v_new = {}, {}, {}
    for k, theta in params.arrays.items():
        g = grads[k]
        if g.shape != theta.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {k} {theta.shape}")
        m = b1 * state.m[k] + (1 - b1) * g
        v = b2 * state.v[k] + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        new_arrays[k] = theta - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_epsilon)
        m_new[k], v_new[k] = m, v
    return replace(params, arrays=new_arrays), AdamState(m_new, v_new, t)


def train_vae(ds: Dataset, include_label: bool, config: VaeConfig):
    """Minibatch Adam training; returns ``(params, LossReport)``.

    Deterministic given ``config.seed``: batch order and Gumbel noise come
    from dedicated seed streams.
    """
    params = init_vae(ds.schema, include_label, config)
    x = one_hot(ds, include_label).data
    report = LossReport()
    if config.epochs == 0 or len(ds) == 0:
        return params, report
    state = AdamState.zeros_like(params)
    shuffle = _rng(config.seed, "vae-shuffle")
    noise_gen = _rng(config.seed, "vae-noise")
    N, K = config.n_latent, config.n_categories
    n = len(ds)
    for epoch in range(config.epochs):
        tau = config.tau(epoch)
        perm = shuffle.permutation(n)
        sums = np.zeros(3)
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = perm[start:start + config.batch_size]
            u = noise_gen.random((len(idx), N, K))
            total, recon, kl, grads = vae_loss(params, x[idx], tau, u)
            if not np.isfinite(total):
                raise NumericError(f"non-finite VAE loss at epoch {epoch}, batch {b}")
            params, state = adam_step(params, grads, state, config)
            sums += len(idx) * np.array([recon, kl, total])
        recon, kl, total = sums / n
        report.recon.append(float(recon))
        report.kl.append(float(kl))
        report.total.append(float(total))
        report.tau.append(float(tau))
    return params, report


def sample_synthetic(params: VaeParams, schema: AttributeSchema, include_label: bool, n: int,
                     seed: int, batch_size: int = 4096) -> Dataset:
    """Decode latent codes drawn from the uniform prior, then sample every block.

    Without ``include_label`` the synthetic labels are all 0.
    """
    widths = block_widths(schema, include_label)
    if tuple(widths) != tuple(params.block_widths):
        raise ValueError("schema does not match the trained model's block layout")
    gen = _rng(seed, "vae-sample")
    N, K = params.n_latent, params.n_categories
    codes = np.empty((n, len(widths)), dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(widths)])
    for start in range(0, n, batch_size):
        b = min(batch_size, n - start)
        z = np.zeros((b, N, K))
        z[np.arange(b)[:, None], np.arange(N)[None, :], gen.integers(0, K, (b, N))] = 1.0
        probs = decode(params, z.reshape(b, N * K))
        u = gen.random((b, len(widths)))
        for j, w in enumerate(widths):
            cdf = np.cumsum(probs[:, offsets[j]:offsets[j] + w], axis=1)
            cdf[:, -1] = np.inf
            codes[start:start + b, j] = np.argmax(u[:, j:j + 1] < cdf, axis=1)
    m = len(schema)
    labels = codes[:, m] if include_label else np.zeros(n, dtype=np.int8)
    return Dataset(schema, codes[:, :m], labels)


@dataclass
class SyntheticSample:
    dataset: Dataset
    report: LossReport
    params: VaeParams
    train_seed: int
    sample_seed: int


def generate_samples(ds: Dataset, include_label: bool, config: VaeConfig, m: int,
                     master_seed: int, mode: str = "retrain", n_records: int | None = None,
                     detailed: bool = False):
    """``m`` synthetic datasets, by default each from its own freshly trained VAE.

    ``mode="once"`` trains a single VAE and samples it ``m`` times.  Sample i
    trains with seed ``derive_seed(master_seed, "vae", i)`` (i = 0 in "once"
    mode) and samples with ``derive_seed(master_seed, "sample", i)``.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if mode not in ("retrain", "once"):
        raise ValueError(f"unknown mode {mode!r}")
    n = len(ds) if n_records is None else n_records
    out = []
    trained = None
    for i in range(m):
        train_seed = derive_seed(master_seed, "vae", i if mode == "retrain" else 0)
        sample_seed = derive_seed(master_seed, "sample", i)
        if trained is None or mode == "retrain":
            try:
                trained = train_vae(ds, include_label, replace(config, seed=train_seed))
            except NumericError as exc:
                raise NumericError(f"synthetic sample {i}: {exc}") from exc
        params, report = trained
        synth = sample_synthetic(params, ds.schema, include_label, n, sample_seed)
        out.append(SyntheticSample(synth, report, params, train_seed, sample_seed))
    return out if detailed else [s.dataset for s in out]
