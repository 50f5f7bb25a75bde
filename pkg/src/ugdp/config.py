"""Pipeline configuration: one JSON document, every default explicit."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

from .biasscan import DEFAULT_Q_CAP
from .errors import ConfigError
from .synth import VaeConfig


@dataclass
class DataConfig:
    path: str = ""
    label_column: str = "y"
    positive_label: str | None = None
    delimiter: str = ","
    attributes: list | None = None  # None: every non-label column
    drop_values: dict = field(default_factory=dict)
    schema: dict | None = None  # declared AttributeSchema document
    prune_unused_values: bool = True
    keep_fraction: float | None = None  # keep floor(f * n) records drawn at random, in file order


@dataclass
class ModelsConfig:
    kinds: list = field(default_factory=lambda: ["random_forest", "gbt"])
    cv_folds: int = 5
    grids: dict = field(default_factory=lambda: {
        "random_forest": {"n_trees": [100], "min_leaf": [5, 20], "max_depth": [12]},
        "gbt": {"n_rounds": [100, 200], "max_depth": [3], "learning_rate": [0.1],
                "min_leaf": [20]},
    })
    cv_on_synthetic: bool = False  # False: synthetic datasets reuse the original's selection
    calibrate: bool = True
    scan_probabilities: str = "in_sample"  # or "out_of_fold"


@dataclass
class ScanConfig:
    direction: str = "over"
    n_restarts: int = 10
    q_cap: float = DEFAULT_Q_CAP


@dataclass
class SynthesisConfig:
    m: int = 6
    mode: str = "retrain"  # or "once"
    include_label: bool = True
    n_records: int | None = None  # None: same as the original
    vae: VaeConfig = field(default_factory=VaeConfig)


@dataclass
class OverlapConfig:
    include_label_in_record_key: bool = False


@dataclass
class PipelineConfig:
    data: DataConfig = field(default_factory=DataConfig)
    models: ModelsConfig = field(default_factory=ModelsConfig)
    scan: ScanConfig = field(default_factory=ScanConfig)
    synthesis: SynthesisConfig = field(default_factory=SynthesisConfig)
    overlap: OverlapConfig = field(default_factory=OverlapConfig)
    seed: int = 0
    output_dir: str = "ugdp-out"
    base_dir: str = field(default=".", metadata={"hashed": False})

    def validate(self) -> None:
        if self.synthesis.m < 1:
            raise ConfigError("synthesis.m must be >= 1")
        if self.scan.direction not in ("over", "under"):
            raise ConfigError(f"scan.direction must be over|under, got {self.scan.direction!r}")
        if self.scan.n_restarts < 1:
            raise ConfigError("scan.n_restarts must be >= 1")
        if self.models.scan_probabilities not in ("in_sample", "out_of_fold"):
            raise ConfigError("models.scan_probabilities must be in_sample|out_of_fold")
        for kind in self.models.kinds:
            if kind not in ("random_forest", "gbt"):
                raise ConfigError(f"unknown model kind {kind!r}")
            if kind not in self.models.grids or not self.models.grids[kind]:
                raise ConfigError(f"no hyperparameter grid for {kind!r}")
        if self.synthesis.mode not in ("retrain", "once"):
            raise ConfigError("synthesis.mode must be retrain|once")
        kf = self.data.keep_fraction
        if kf is not None and not 0 < kf <= 1:
            raise ConfigError("data.keep_fraction must lie in (0, 1]")
        if not self.synthesis.include_label:
            raise ConfigError("synthesis.include_label must be true: synthetic datasets need labels "
                              "to train classifiers")
        if not self.data.path:
            raise ConfigError("data.path is required")

    def resolve(self, p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else Path(self.base_dir) / path

    @property
    def data_path(self) -> Path:
        return self.resolve(self.data.path)

    @property
    def out_path(self) -> Path:
        return self.resolve(self.output_dir)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return d

    def hashed_dict(self) -> dict:
        """Everything that determines results: the output location is excluded."""
        d = self.to_dict()
        d.pop("output_dir")
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.hashed_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _build(cls, d, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name: f for f in fields(cls)}
    unknown = set(d) - set(known)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for name, value in d.items():
        default = known[name].default_factory() if callable(known[name].default_factory) else None
        if is_dataclass(default) and not isinstance(default, VaeConfig):
            kwargs[name] = _build(type(default), value, f"{where}.{name}")
        elif isinstance(default, VaeConfig):
            try:
                kwargs[name] = VaeConfig.from_dict(value)
            except TypeError as exc:
                raise ConfigError(f"{where}.{name}: {exc}") from exc
        else:
            kwargs[name] = value
    return cls(**kwargs)


def config_from_dict(d: dict, base_dir=".") -> PipelineConfig:
    cfg = _build(PipelineConfig, dict(d), "config")
    cfg.base_dir = str(base_dir)
    cfg.validate()
    return cfg


def load_config(path) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return config_from_dict(d, path.parent)


def default_config_document() -> dict:
    d = PipelineConfig().to_dict()
    d["data"]["path"] = "<path to CSV>"
    return d
