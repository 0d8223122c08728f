"""Similarity-guided fusion of dominant and auxiliary modality logits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dmss import UncertaintyReport
from .errors import InvalidArgumentError
from .numerics import softmax
from .semantic import SimilarityMatrix


def similarity_reweight(sim: SimilarityMatrix | np.ndarray, logits) -> np.ndarray:
    """``S @ lo`` for a vector, or row-wise for a batch of logit vectors."""
    s = sim.values if isinstance(sim, SimilarityMatrix) else np.asarray(sim, dtype=np.float64)
    lo = np.asarray(logits, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1] or lo.shape[-1] != s.shape[1]:
        raise InvalidArgumentError(f"similarity {s.shape} cannot reweight logits of shape {lo.shape}")
    return lo @ s.T


@dataclass
class FusionDecision:
    dominant: str
    lo_dom: np.ndarray
    lo_aux_reweighted: np.ndarray
    lo_fused: np.ndarray
    probs: np.ndarray
    predicted_class: int
    uncertainty: UncertaintyReport | None = None

    def to_dict(self) -> dict:
        return {
            "dominant": self.dominant,
            "lo_dom": self.lo_dom.tolist(),
            "lo_aux_reweighted": self.lo_aux_reweighted.tolist(),
            "lo_fused": self.lo_fused.tolist(),
            "probs": self.probs.tolist(),
            "predicted_class": self.predicted_class,
            "uncertainty": None if self.uncertainty is None else self.uncertainty.to_dict(),
        }


def decision(dominant: str, lo_dom, lo_aux, uncertainty=None) -> FusionDecision:
    lo_dom = np.asarray(lo_dom, dtype=np.float64)
    lo_aux = np.asarray(lo_aux, dtype=np.float64)
    fused = lo_dom + lo_aux
    probs = softmax(fused)
    return FusionDecision(dominant, lo_dom, lo_aux, fused, probs, int(np.argmax(fused)), uncertainty)


def fuse(lo_a, lo_b, sim_a, sim_b, u_a: float, u_b: float, uncertainty=None) -> FusionDecision:
    """Dominant logits plus similarity-reweighted auxiliary logits.

    A dominates only when ``u_a < u_b``; otherwise B does.
    """
    lo_a = np.asarray(lo_a, dtype=np.float64)
    lo_b = np.asarray(lo_b, dtype=np.float64)
    if lo_a.ndim != 1 or lo_a.shape != lo_b.shape:
        raise InvalidArgumentError(f"logit vectors must have equal length: {lo_a.shape} vs {lo_b.shape}")
    if u_a < u_b:
        return decision("A", lo_a, similarity_reweight(sim_b, lo_b), uncertainty)
    return decision("B", lo_b, similarity_reweight(sim_a, lo_a), uncertainty)


def fuse_batch(lo_a, lo_b, sim_a, sim_b, a_dominant) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized fusion; returns ``(fused logits, aux reweighted logits)``.

    ``a_dominant`` is a boolean mask choosing A as dominant per row.
    """
    mask = np.asarray(a_dominant, dtype=bool)[:, None]
    aux = np.where(mask, similarity_reweight(sim_b, lo_b), similarity_reweight(sim_a, lo_a))
    dom = np.where(mask, lo_a, lo_b)
    return dom + aux, aux
