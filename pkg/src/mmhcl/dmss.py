"""Dominant-modality selection from ensemble entropies.

Uncertainty of a modality is the sum of two shares that each split one
unit between the modalities:

* intra-modality inconsistency: the spread (population std) of the K
  module entropies, as a share of the spreads of both modalities;
* inter-modality difference: the entropy of the mean-logit prediction, as
  a share of both modalities' entropies.

Hence ``u_A + u_B == 2`` and the lower-uncertainty modality dominates.
All functions accept scalars or per-sample arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, NumericError
from .numerics import entropy
from .osrs import PredictionBundle


def entropy_spread(probs_list) -> np.ndarray | float:
    """Population standard deviation of module entropies.

    ``probs_list`` has the K modules on the first axis: ``(K, N)`` or
    ``(K, B, N)``.
    """
    p = np.asarray(probs_list, dtype=np.float64)
    if p.ndim < 2 or p.shape[0] < 2:
        raise InvalidArgumentError("entropy spread needs at least 2 module predictions")
    spread = _pstd(np.asarray(entropy(p)))
    return float(spread) if spread.ndim == 0 else spread


def _pstd(h: np.ndarray) -> np.ndarray:
    """Population std over axis 0, exactly zero when all entries agree.

    The mean of equal values can be off by an ulp, which would otherwise
    leave a ~1e-17 spread and break the zero-denominator rule.
    """
    spread = np.sqrt(np.mean((h - h.mean(axis=0)) ** 2, axis=0))
    return np.where(np.ptp(h, axis=0) == 0, 0.0, spread)


def _shares(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    total = a + b
    degenerate = total == 0
    safe = np.where(degenerate, 1.0, total)
    share_a = np.where(degenerate, 0.5, a / safe)
    share_b = np.where(degenerate, 0.5, b / safe)
    if share_a.ndim == 0:
        return float(share_a), float(share_b), bool(degenerate)
    return share_a, share_b, degenerate


def intra_inconsistency(spread_a, spread_b):
    """Return ``(inc_A, inc_B, degenerate)``; both spreads zero gives 0.5/0.5."""
    if np.any(np.asarray(spread_a) < 0) or np.any(np.asarray(spread_b) < 0):
        raise InvalidArgumentError("entropy spreads must be non-negative")
    return _shares(spread_a, spread_b)


def inter_difference(p_a, p_b):
    """Return ``(dif_A, dif_B, degenerate)`` from the two mean-logit posteriors."""
    p_a = np.asarray(p_a, dtype=np.float64)
    p_b = np.asarray(p_b, dtype=np.float64)
    if p_a.shape != p_b.shape:
        raise InvalidArgumentError(f"posteriors differ in shape: {p_a.shape} vs {p_b.shape}")
    return _shares(entropy(p_a), entropy(p_b))


def modality_uncertainty(inc, dif):
    return inc + dif


def select_dominant(u_a, u_b) -> tuple[str, bool]:
    """``("A", tie)`` if ``u_a < u_b`` or on an exact tie, else ``("B", False)``."""
    if not (np.isfinite(u_a) and np.isfinite(u_b)):
        raise NumericError(f"non-finite uncertainty: u_A={u_a}, u_B={u_b}")
    if u_a < u_b:
        return "A", False
    if u_a > u_b:
        return "B", False
    return "A", True


@dataclass
class UncertaintyReport:
    """Per-modality DMSS quantities for one sample.

    Every per-modality field is a dict keyed by ``"A"``/``"B"``.
    """

    h_modules: dict[str, list[float]]
    h_mean: dict[str, float]
    spread: dict[str, float]
    inc: dict[str, float]
    dif: dict[str, float]
    u: dict[str, float]
    dominant: str
    degenerate_flags: dict[str, bool] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "h_modules": self.h_modules,
            "h_mean": self.h_mean,
            "spread": self.spread,
            "inc": self.inc,
            "dif": self.dif,
            "u": self.u,
            "dominant": self.dominant,
            "degenerate_flags": self.degenerate_flags,
        }


@dataclass
class BatchUncertainty:
    """Vectorized DMSS results for a batch; arrays have one entry per sample."""

    h_modules_a: np.ndarray  # (K, B)
    h_modules_b: np.ndarray
    spread_a: np.ndarray
    spread_b: np.ndarray
    inc_a: np.ndarray
    inc_b: np.ndarray
    dif_a: np.ndarray
    dif_b: np.ndarray
    inc_degenerate: np.ndarray
    dif_degenerate: np.ndarray

    @property
    def u_a(self) -> np.ndarray:
        return modality_uncertainty(self.inc_a, self.dif_a)

    @property
    def u_b(self) -> np.ndarray:
        return modality_uncertainty(self.inc_b, self.dif_b)

    @property
    def a_dominant(self) -> np.ndarray:
        """True where A dominates; exact ties go to A."""
        u_a, u_b = self.u_a, self.u_b
        if not (np.all(np.isfinite(u_a)) and np.all(np.isfinite(u_b))):
            raise NumericError("non-finite uncertainty in batch")
        return u_a <= u_b

    def report(self, i: int, missing: dict[str, bool] | None = None) -> UncertaintyReport:
        u_a, u_b = float(self.u_a[i]), float(self.u_b[i])
        dominant, tie = select_dominant(u_a, u_b)
        flags = {
            "inc_zero_denominator": bool(self.inc_degenerate[i]),
            "dif_zero_denominator": bool(self.dif_degenerate[i]),
            "tie": tie,
        }
        for mod, absent in (missing or {}).items():
            flags[f"missing_{mod}"] = bool(absent)
        ha = self.h_modules_a[:, i]
        hb = self.h_modules_b[:, i]
        return UncertaintyReport(
            h_modules={"A": ha.tolist(), "B": hb.tolist()},
            h_mean={"A": float(ha.mean()), "B": float(hb.mean())},
            spread={"A": float(self.spread_a[i]), "B": float(self.spread_b[i])},
            inc={"A": float(self.inc_a[i]), "B": float(self.inc_b[i])},
            dif={"A": float(self.dif_a[i]), "B": float(self.dif_b[i])},
            u={"A": u_a, "B": u_b},
            dominant=dominant,
            degenerate_flags=flags,
        )


def assess_batch(bundle_a: PredictionBundle, bundle_b: PredictionBundle) -> BatchUncertainty:
    """DMSS on batched bundles (probs of shape ``(K, B, N)``)."""
    h_a = np.asarray(entropy(bundle_a.probs))
    h_b = np.asarray(entropy(bundle_b.probs))
    e_a = _pstd(h_a)
    e_b = _pstd(h_b)
    inc_a, inc_b, inc_deg = intra_inconsistency(e_a, e_b)
    dif_a, dif_b, dif_deg = inter_difference(bundle_a.mean_probs, bundle_b.mean_probs)
    return BatchUncertainty(
        h_a.reshape(h_a.shape[0], -1),
        h_b.reshape(h_b.shape[0], -1),
        np.atleast_1d(e_a),
        np.atleast_1d(e_b),
        np.atleast_1d(inc_a),
        np.atleast_1d(inc_b),
        np.atleast_1d(dif_a),
        np.atleast_1d(dif_b),
        np.atleast_1d(inc_deg),
        np.atleast_1d(dif_deg),
    )


def assess(bundle_a: PredictionBundle, bundle_b: PredictionBundle) -> UncertaintyReport:
    """DMSS report for a single sample (bundles with probs of shape ``(K, N)``)."""
    if bundle_a.probs.ndim != 2 or bundle_b.probs.ndim != 2:
        raise InvalidArgumentError("assess expects single-sample bundles; use assess_batch for batches")
    batch = assess_batch(bundle_a, bundle_b)
    return batch.report(0, {"A": bool(bundle_a.degenerate), "B": bool(bundle_b.degenerate)})
