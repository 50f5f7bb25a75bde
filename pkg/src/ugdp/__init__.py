"""Subgroup-preservation checks for synthetic tabular data.

Train classifiers on an original dataset, find its most anomalous subgroup
with Bias-Scan, draw synthetic samples from a categorical VAE, re-scan each
sample and measure how far the subgroups drifted.
"""
from ._core import BACKEND
from .biasscan import ScanResult, bias_scan, brute_force_scan, optimize_mode, optimize_q
from .config import PipelineConfig, load_config
from .errors import UgdpError
from .overlap import attr_value_overlap, jaccard_distance, record_overlap
from .synth import VaeConfig, generate_samples, train_vae
from .tabular import AttributeSchema, Dataset, load_csv

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "AttributeSchema", "Dataset", "PipelineConfig", "ScanResult", "UgdpError",
    "VaeConfig", "attr_value_overlap", "bias_scan", "brute_force_scan", "generate_samples",
    "jaccard_distance", "load_config", "load_csv", "optimize_mode", "optimize_q",
    "record_overlap", "train_vae",
]
