"""Multimodal learning with heterogeneous class sets per modality.

Each modality is mapped into a shared class-embedding space by an ensemble
of small MLPs, so it can score classes it never saw. At test time the less
uncertain modality leads, and the other contributes logits reweighted by
class similarity.
"""

__version__ = "0.1.0"

from .csmf import FusionDecision, fuse, similarity_reweight
from .dataset import (
    ClassPartition,
    MmhclDataset,
    MultimodalSample,
    SyntheticSpec,
    make_eval_scenarios,
    split_classes,
    standard_benchmark,
    synthesize,
    synthetic_catalog,
)
from .dmss import UncertaintyReport, assess, select_dominant
from .evaluation import MetricsReport, ablation_suite, evaluate, topk_sweep, uncertainty_dump
from .numerics import cosine, entropy, softmax
from .osrs import ensemble_predict, make_ensemble
from .semantic import ClassCatalog, class_similarity, load_catalog, prune_topk, random_catalog
from .training import TrainConfig, load_checkpoint, predict, predict_batch, save_checkpoint, train

__all__ = [
    "ClassCatalog",
    "ClassPartition",
    "FusionDecision",
    "MetricsReport",
    "MmhclDataset",
    "MultimodalSample",
    "SyntheticSpec",
    "TrainConfig",
    "UncertaintyReport",
    "ablation_suite",
    "assess",
    "class_similarity",
    "cosine",
    "ensemble_predict",
    "entropy",
    "evaluate",
    "fuse",
    "load_catalog",
    "load_checkpoint",
    "make_ensemble",
    "make_eval_scenarios",
    "predict",
    "predict_batch",
    "prune_topk",
    "random_catalog",
    "save_checkpoint",
    "select_dominant",
    "similarity_reweight",
    "softmax",
    "split_classes",
    "standard_benchmark",
    "synthesize",
    "synthetic_catalog",
    "topk_sweep",
    "train",
    "uncertainty_dump",
]
