"""Scenario evaluation, comparison baselines, ablations and sweeps."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .dataset import MIX_SCENARIOS, SCENARIOS, MmhclDataset, MultimodalSample, make_eval_scenarios, stack_features
from .dmss import assess_batch
from .errors import InvalidArgumentError
from .osrs import ModalityEnsemble, bundle_from_logits, ensemble_logits
from .semantic import ClassCatalog
from .training import FcBaselineState, ModelState, TrainConfig, predict_batch, train, train_fc_baseline

log = logging.getLogger(__name__)

#: maps a list of samples to predicted class indices
Predictor = Callable[[Sequence[MultimodalSample]], np.ndarray]


def config_fingerprint(config) -> str:
    """Short stable hash of a config (dataclass or dict), independent of key order."""
    if hasattr(config, "__dataclass_fields__"):
        config = asdict(config)
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


@dataclass
class MetricsReport:
    name: str
    accuracy: dict[str, float]
    counts: dict[str, int]
    fingerprint: str = ""
    seed: int | None = None
    records: list[dict] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "accuracy": self.accuracy,
            "counts": self.counts,
            "fingerprint": self.fingerprint,
            "seed": self.seed,
        }

    def to_text(self) -> str:
        names = [s for s in SCENARIOS if s in self.accuracy]
        head = f"{'model':<12}" + "".join(f"{n:>13}" for n in names)
        row = f"{self.name:<12}" + "".join(f"{self.accuracy[n]:>13.2f}" for n in names)
        return head + "\n" + row + "\n"


def reports_to_text(reports: Sequence[MetricsReport]) -> str:
    names = [s for s in SCENARIOS if any(s in r.accuracy for r in reports)]
    lines = [f"{'model':<12}" + "".join(f"{n:>13}" for n in names)]
    for r in reports:
        lines.append(f"{r.name:<12}" + "".join(f"{r.accuracy.get(n, float('nan')):>13.2f}" for n in names))
    return "\n".join(lines) + "\n"


def evaluate(
    predictor: Predictor,
    scenarios: dict[str, list[MultimodalSample]],
    name: str = "model",
    fingerprint: str = "",
    seed: int | None = None,
) -> MetricsReport:
    """Top-1 accuracy (percent) over all classes in every scenario.

    Each distinct test sample is predicted once; the per-sample records
    (``id``, ``label``, ``predicted``, ``scenarios``) are kept on the report
    so every number can be recounted.
    """
    unique: dict[str, MultimodalSample] = {}
    member: dict[str, list[str]] = {}
    for scen, samples in scenarios.items():
        if not samples:
            log.warning("scenario %s is empty and is skipped", scen)
            continue
        for s in samples:
            unique.setdefault(s.id, s)
            member.setdefault(s.id, []).append(scen)
    ids = list(unique)
    preds = np.asarray(predictor([unique[i] for i in ids])) if ids else np.array([], dtype=int)
    records = [
        {"id": sid, "label": unique[sid].label, "predicted": int(p), "scenarios": member[sid]}
        for sid, p in zip(ids, preds)
    ]
    accuracy, counts = aggregate(records)
    return MetricsReport(name, accuracy, counts, fingerprint, seed, records)


def aggregate(records) -> tuple[dict[str, float], dict[str, int]]:
    """Per-scenario accuracy from per-sample records."""
    correct: dict[str, int] = {}
    total: dict[str, int] = {}
    for r in records:
        for scen in r["scenarios"]:
            total[scen] = total.get(scen, 0) + 1
            correct[scen] = correct.get(scen, 0) + int(r["label"] == r["predicted"])
    order = [s for s in SCENARIOS if s in total] + sorted(set(total) - set(SCENARIOS))
    return {s: 100.0 * correct[s] / total[s] for s in order}, {s: total[s] for s in order}


def write_predictions(report: MetricsReport, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "label", "predicted", "scenarios"])
        for r in report.records:
            w.writerow([r["id"], r["label"], r["predicted"], ";".join(r["scenarios"])])


def read_predictions(path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return [
            {"id": r["id"], "label": int(r["label"]), "predicted": int(r["predicted"]), "scenarios": r["scenarios"].split(";")}
            for r in csv.DictReader(fh)
        ]


# ---------------------------------------------------------------------------
# predictors and baselines
# ---------------------------------------------------------------------------


def model_predictor(model: ModelState) -> Predictor:
    return lambda samples: predict_batch(model, samples).predicted


def fc_predictor(fc: FcBaselineState) -> Predictor:
    return fc.predict_batch


def average_fusion_baseline(model: ModelState, sample: MultimodalSample) -> int:
    """Argmax of the mean of both modalities' mean logits."""
    return int(average_fusion_predictor(model)([sample])[0])


def average_fusion_predictor(model: ModelState) -> Predictor:
    return model_predictor(model.with_config(use_dmss=False, use_csmf=False))


@dataclass
class ConfidenceDecision:
    predicted_class: int
    chosen: str
    confidence: dict[str, float]


def confidence_max_batch(
    ensemble_a: ModalityEnsemble, ensemble_b: ModalityEnsemble, catalog: ClassCatalog, samples
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Dual unimodal models; for complete inputs the more confident one wins.

    Returns ``(predicted, chose_a, max-prob pair of shape (B, 2))``. Each
    model uses its ensemble's mean-logit posterior.
    """
    samples = list(samples)
    xa, xb = stack_features(samples, ensemble_a.input_dim, ensemble_b.input_dim)
    pa = bundle_from_logits(*ensemble_logits(ensemble_a, xa, catalog)).mean_probs
    pb = bundle_from_logits(*ensemble_logits(ensemble_b, xb, catalog)).mean_probs
    has_a = np.array([bool(s.present_a) for s in samples])
    has_b = np.array([bool(s.present_b) for s in samples])
    conf = np.stack([pa.max(axis=1), pb.max(axis=1)], axis=1)
    chose_a = np.where(has_a & has_b, conf[:, 0] >= conf[:, 1], has_a)
    pred = np.where(chose_a, pa.argmax(axis=1), pb.argmax(axis=1))
    return pred, chose_a, conf


def confidence_max_baseline(ensemble_a, ensemble_b, catalog, sample) -> ConfidenceDecision:
    pred, chose_a, conf = confidence_max_batch(ensemble_a, ensemble_b, catalog, [sample])
    return ConfidenceDecision(int(pred[0]), "A" if chose_a[0] else "B", {"A": float(conf[0, 0]), "B": float(conf[0, 1])})


def confidence_max_predictor(model: ModelState) -> Predictor:
    """Confidence-max over the model's two ensembles used as separate unimodal models.

    Each ensemble is trained only on its own modality, so it is exactly an
    independently trained unimodal model.
    """
    return lambda samples: confidence_max_batch(model.ensemble_a, model.ensemble_b, model.catalog, samples)[0]


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

ABLATIONS = {
    "B+O": {"use_dmss": False, "use_csmf": False},
    "B+O+D": {"use_dmss": True, "use_csmf": False},
    "B+O+D+C": {"use_dmss": True, "use_csmf": True},
}


def ablation_suite(
    dataset: MmhclDataset,
    catalog: ClassCatalog,
    base_config: TrainConfig,
    model: ModelState | None = None,
) -> list[MetricsReport]:
    """Reports for B, B+O, B+O+D and B+O+D+C on identical data.

    The three OSRS variants share one trained model: the training objective
    does not involve selection or fusion, so only inference differs.
    """
    scenarios = make_eval_scenarios(dataset)
    fp = config_fingerprint(base_config)
    seed = base_config.seed
    if model is None:
        model = train(dataset, catalog, base_config)
    fc = train_fc_baseline(dataset, base_config)
    reports = [evaluate(fc_predictor(fc), scenarios, "B", fp, seed)]
    for name, flags in ABLATIONS.items():
        reports.append(evaluate(model_predictor(model.with_config(**flags)), scenarios, name, fp, seed))
    return reports


def comparison_suite(model: ModelState, dataset: MmhclDataset) -> list[MetricsReport]:
    """Full model against average fusion and the confidence-max dual model."""
    scenarios = make_eval_scenarios(dataset)
    fp = config_fingerprint(model.config)
    seed = model.config.seed
    return [
        evaluate(model_predictor(model), scenarios, "CSCF", fp, seed),
        evaluate(average_fusion_predictor(model), scenarios, "avg-fusion", fp, seed),
        evaluate(confidence_max_predictor(model), scenarios, "conf-max", fp, seed),
    ]


def topk_sweep(
    model: ModelState, dataset: MmhclDataset, k_values: Sequence[int]
) -> list[tuple[str, MetricsReport]]:
    """One report per valid k plus the no-similarity reference (``"none"``).

    The trained mappers are reused; only the pruned similarity changes.
    """
    scenarios = make_eval_scenarios(dataset)
    fp = config_fingerprint(model.config)
    seed = model.config.seed
    out = [("none", evaluate(model_predictor(model.with_config(use_csmf=False)), scenarios, "k=none", fp, seed))]
    n = model.catalog.n_classes
    for k in k_values:
        if not isinstance(k, (int, np.integer)) or not 1 <= k <= n:
            log.warning("skipping invalid top-k value %r (must be in [1, %d])", k, n)
            continue
        out.append((str(k), evaluate(model_predictor(model.with_config(top_k=int(k))), scenarios, f"k={k}", fp, seed)))
    return out


def write_sweep_csv(sweep, path) -> None:
    names = [s for s in SCENARIOS if any(s in r.accuracy for _, r in sweep)]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["k"] + names)
        for k, r in sweep:
            w.writerow([k] + [f"{r.accuracy.get(n, float('nan')):.4f}" for n in names])


def uncertainty_dump(model: ModelState, samples, n: int, seed: int = 0) -> list[dict]:
    """DMSS records for ``n`` seeded random samples."""
    samples = list(samples)
    if n > len(samples):
        raise InvalidArgumentError(f"requested {n} samples but only {len(samples)} available")
    idx = np.sort(np.random.default_rng([seed, 505]).choice(len(samples), size=n, replace=False))
    chosen = [samples[i] for i in idx]
    pb = predict_batch(model, chosen)
    rows = []
    for i, s in enumerate(chosen):
        rep = pb.uncertainty.report(i, {"A": not s.present_a, "B": not s.present_b})
        rows.append(
            {
                "id": s.id,
                "label": s.label,
                "u_A": rep.u["A"],
                "u_B": rep.u["B"],
                "inc_A": rep.inc["A"],
                "inc_B": rep.inc["B"],
                "dif_A": rep.dif["A"],
                "dif_B": rep.dif["B"],
                "dominant": rep.dominant,
                "predicted": int(pb.predicted[i]),
            }
        )
    return rows


def write_uncertainty_csv(rows, path) -> None:
    cols = ["id", "label", "u_A", "u_B", "inc_A", "inc_B", "dif_A", "dif_B", "dominant", "predicted"]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for r in rows:
            w.writerow({c: (repr(r[c]) if isinstance(r[c], float) else r[c]) for c in cols})


def dominance_rate(model: ModelState, samples, partition) -> float:
    """Fraction of complete samples whose true class's seeing modality has lower uncertainty."""
    samples = [s for s in samples if s.is_complete]
    if not samples:
        raise InvalidArgumentError("no complete samples")
    pb = predict_batch(model, samples)
    u_a, u_b = pb.uncertainty.u_a, pb.uncertainty.u_b
    ok = [
        (u_a[i] < u_b[i]) if s.label in partition.seen_a and s.label not in partition.seen_b else
        (u_b[i] < u_a[i]) if s.label in partition.seen_b and s.label not in partition.seen_a else False
        for i, s in enumerate(samples)
    ]
    return float(np.mean(ok))


def mix_accuracy(report: MetricsReport) -> float:
    return report.accuracy["mix"]


__all__ = [
    "MIX_SCENARIOS",
    "MetricsReport",
    "config_fingerprint",
    "evaluate",
    "aggregate",
    "ablation_suite",
    "comparison_suite",
    "topk_sweep",
    "uncertainty_dump",
    "assess_batch",
]
