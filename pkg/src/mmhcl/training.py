"""Training of the two modality ensembles, inference pipeline and checkpoints."""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import dmss
from .csmf import FusionDecision, decision, fuse_batch
from .dataset import MmhclDataset, MultimodalSample, pad_missing, stack_features
from .errors import (
    CheckpointError,
    CheckpointVersionError,
    ConfigError,
    InvalidArgumentError,
    NumericError,
)
from .numerics import AdamState, MlpGrads, MlpParams, adam_step, softmax
from .osrs import (
    DEFAULT_ARCHITECTURES,
    ModalityEnsemble,
    OsrsModule,
    PredictionBundle,
    bundle_from_logits,
    ensemble_logits,
    make_ensemble,
    module_logits_and_backward,
)
from .semantic import ClassCatalog, SimilarityMatrix, class_similarity, prune_topk

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"MMHCLCKP"
CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    lr: float = 5e-4
    weight_decay: float = 1e-4
    epochs: int = 50
    batch_size: int = 256
    n_modules: int = 4
    gamma: float = 5.0
    top_k: int = 5
    seed: int = 0
    use_osrs: bool = True
    use_dmss: bool = True
    use_csmf: bool = True
    prune_scope: str = "all"
    row_normalize: bool = False
    force_dominant_on_missing: bool = False
    mapper_bias: bool = False

    def validate(self) -> None:
        for name in ("lr", "gamma", "batch_size", "n_modules", "top_k"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.weight_decay < 0 or self.epochs < 0:
            raise ConfigError("weight_decay and epochs must be non-negative")
        if self.n_modules < 2:
            raise ConfigError(
                "n_modules must be >= 2: with one module the entropy spread is always 0 "
                "and dominant-modality selection is undefined"
            )
        if self.prune_scope not in ("all", "seen-only"):
            raise ConfigError(f"prune_scope must be 'all' or 'seen-only', got {self.prune_scope!r}")
        if self.use_csmf and not self.use_dmss:
            raise ConfigError("use_csmf requires use_dmss")
        if self.use_dmss and not self.use_osrs:
            raise ConfigError("use_dmss requires use_osrs")

    def replace(self, **changes) -> TrainConfig:
        return TrainConfig(**{**asdict(self), **changes})

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown training option(s): {', '.join(sorted(unknown))}")
        return cls(**d)


@dataclass
class ModelState:
    ensemble_a: ModalityEnsemble
    ensemble_b: ModalityEnsemble
    catalog: ClassCatalog
    sim_a: SimilarityMatrix
    sim_b: SimilarityMatrix
    config: TrainConfig
    log: list[dict] = field(default_factory=list)
    seen_a: tuple[int, ...] = ()
    seen_b: tuple[int, ...] = ()

    @property
    def dim_a(self) -> int:
        return self.ensemble_a.input_dim

    @property
    def dim_b(self) -> int:
        return self.ensemble_b.input_dim

    def with_config(self, **changes) -> ModelState:
        """Same trained ensembles under changed inference options.

        Similarity matrices are re-derived, so ``top_k``, ``prune_scope``
        and ``row_normalize`` can be swept without retraining.
        """
        cfg = self.config.replace(**changes)
        cfg.validate()
        sim_a, sim_b = pruned_similarities(self.catalog, cfg, self.seen_a, self.seen_b)
        return ModelState(
            self.ensemble_a, self.ensemble_b, self.catalog, sim_a, sim_b, cfg, self.log, self.seen_a, self.seen_b
        )


def pruned_similarities(catalog, config: TrainConfig, seen_a=(), seen_b=()):
    full = class_similarity(catalog)
    k = min(config.top_k, catalog.n_classes)
    if config.prune_scope == "seen-only":
        rows_a, rows_b = sorted(seen_a), sorted(seen_b)
    else:
        rows_a = rows_b = None
    return (
        prune_topk(full, k, rows_a, config.row_normalize),
        prune_topk(full, k, rows_b, config.row_normalize),
    )


# ---------------------------------------------------------------------------
# objective
# ---------------------------------------------------------------------------


def _cross_entropy(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    picked = np.take_along_axis(probs, labels[..., None], axis=-1)[..., 0]
    return -np.log(np.maximum(picked, np.finfo(float).tiny))


def modality_loss(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Ensemble objective of one modality and its gradient w.r.t. logits.

    ``logits`` is ``(K, B, N)``. The per-sample loss is the module-averaged
    cross-entropy plus the cross-entropy of the mean-logit posterior; the
    batch loss is its mean.
    """
    labels = np.asarray(labels, dtype=int)
    k, b, n = logits.shape
    if labels.shape != (b,) or np.any(labels < 0) or np.any(labels >= n):
        raise InvalidArgumentError(f"labels must be {b} class indices in [0, {n})")
    probs = softmax(logits)
    mean_probs = softmax(logits.mean(axis=0))
    loss = _cross_entropy(probs, np.broadcast_to(labels, (k, b))).mean(axis=0) + _cross_entropy(mean_probs, labels)
    onehot = np.zeros((b, n))
    onehot[np.arange(b), labels] = 1.0
    grad = ((probs - onehot) + (mean_probs - onehot)) / (k * b)
    return float(loss.mean()), grad


def total_loss(bundle_a: PredictionBundle | None, bundle_b: PredictionBundle | None, labels_a, labels_b):
    """Sum of both modalities' ensemble objectives.

    Bundles are batched (``logits`` of shape ``(K, B, N)``); either may be
    ``None`` when a batch has no samples of that modality. Returns
    ``(L, {"A": L_A, "B": L_B})``.
    """
    parts = {}
    for name, bundle, labels in (("A", bundle_a, labels_a), ("B", bundle_b, labels_b)):
        if bundle is None:
            parts[name] = 0.0
            continue
        parts[name], _ = modality_loss(bundle.logits, labels)
    return parts["A"] + parts["B"], parts


def ensemble_loss_and_grads(
    ensemble: ModalityEnsemble, x: np.ndarray, labels: np.ndarray, catalog: ClassCatalog, mapper_bias: bool = True
) -> tuple[float, list[MlpGrads]]:
    """Loss of one modality on a batch and gradients for every module's mapper."""
    unit_c = catalog.unit_embeddings
    outs = [module_logits_and_backward(m, x, unit_c) for m in ensemble.modules]
    logits = np.stack([lo for lo, _ in outs])
    loss, g_logits = modality_loss(logits, labels)
    grads = [backward(g_logits[i]) for i, (_, backward) in enumerate(outs)]
    if not mapper_bias:
        for g in grads:
            g.biases = [np.zeros_like(b) for b in g.biases]
    return loss, grads


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


def init_model(dim_a: int, dim_b: int, catalog: ClassCatalog, config: TrainConfig, partition=None) -> ModelState:
    config.validate()
    ens_a = make_ensemble("A", dim_a, catalog.dim, config.n_modules, config.gamma, config.seed)
    ens_b = make_ensemble("B", dim_b, catalog.dim, config.n_modules, config.gamma, config.seed)
    seen_a = tuple(sorted(partition.seen_a)) if partition is not None else ()
    seen_b = tuple(sorted(partition.seen_b)) if partition is not None else ()
    sim_a, sim_b = pruned_similarities(catalog, config, seen_a, seen_b)
    return ModelState(ens_a, ens_b, catalog, sim_a, sim_b, config, [], seen_a, seen_b)


def _batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n)
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


def train(dataset: MmhclDataset, catalog: ClassCatalog, config: TrainConfig) -> ModelState:
    """Train both ensembles on their unimodal training streams.

    Each epoch shuffles both streams and alternates A and B mini-batches;
    an A batch only updates A mappers and vice versa. Every mapper has its
    own Adam state.
    """
    config.validate()
    if catalog.n_classes != dataset.partition.n_classes:
        raise InvalidArgumentError("catalog and dataset disagree on the number of classes")
    model = init_model(dataset.dim_a, dataset.dim_b, catalog, config, dataset.partition)
    data = {m: dataset.train_arrays(m) for m in "AB"}
    ensembles = {"A": model.ensemble_a, "B": model.ensemble_b}
    optim = {
        m: [AdamState(lr=config.lr, weight_decay=config.weight_decay) for _ in ensembles[m].modules] for m in "AB"
    }
    rng = np.random.default_rng([config.seed, 303])
    for epoch in range(1, config.epochs + 1):
        batches = {m: _batches(len(data[m][1]), config.batch_size, rng) for m in "AB"}
        sums = {"A": 0.0, "B": 0.0}
        counts = {"A": 0, "B": 0}
        for step in range(max(len(batches["A"]), len(batches["B"]))):
            for m in "AB":
                if step >= len(batches[m]):
                    continue
                idx = batches[m][step]
                x, y = data[m][0][idx], data[m][1][idx]
                loss, grads = ensemble_loss_and_grads(ensembles[m], x, y, catalog, config.mapper_bias)
                if not np.isfinite(loss):
                    raise NumericError(f"non-finite loss in epoch {epoch}, modality {m} batch {step}")
                for module, state, g in zip(ensembles[m].modules, optim[m], grads):
                    adam_step(state, module.mapper, g)
                sums[m] += loss * len(idx)
                counts[m] += len(idx)
        loss_a = sums["A"] / counts["A"] if counts["A"] else 0.0
        loss_b = sums["B"] / counts["B"] if counts["B"] else 0.0
        model.log.append({"epoch": epoch, "loss_A": loss_a, "loss_B": loss_b, "loss_total": loss_a + loss_b})
        log.debug("epoch %d loss_A=%.5f loss_B=%.5f", epoch, loss_a, loss_b)
    return model


def write_train_log(model: ModelState, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write("epoch,loss_A,loss_B,loss_total\n")
        for row in model.log:
            fh.write(f"{row['epoch']},{row['loss_A']!r},{row['loss_B']!r},{row['loss_total']!r}\n")


# ---------------------------------------------------------------------------
# inference
# ---------------------------------------------------------------------------


@dataclass
class BatchPrediction:
    """Vectorized outputs of :func:`predict_batch`."""

    bundle_a: PredictionBundle
    bundle_b: PredictionBundle
    uncertainty: dmss.BatchUncertainty
    a_dominant: np.ndarray
    lo_dom: np.ndarray
    lo_aux: np.ndarray
    fused: np.ndarray
    present_a: np.ndarray
    present_b: np.ndarray

    @property
    def predicted(self) -> np.ndarray:
        return np.argmax(self.fused, axis=1)

    def decision(self, i: int) -> FusionDecision:
        report = self.uncertainty.report(i, {"A": not self.present_a[i], "B": not self.present_b[i]})
        report.dominant = "A" if self.a_dominant[i] else "B"
        return decision(report.dominant, self.lo_dom[i], self.lo_aux[i], report)


def predict_batch(model: ModelState, samples) -> BatchPrediction:
    """Run the OSRS -> DMSS -> CSMF chain on many samples at once.

    Absent modalities are zero-padded; with bias-free mappers the padded
    side maps to the zero vector and yields all-zero logits.
    """
    samples = list(samples)
    cfg = model.config
    xa, xb = stack_features(samples, model.dim_a, model.dim_b)
    pres_a = np.array([bool(s.present_a) for s in samples])
    pres_b = np.array([bool(s.present_b) for s in samples])
    bundle_a = bundle_from_logits(*ensemble_logits(model.ensemble_a, xa, model.catalog))
    bundle_b = bundle_from_logits(*ensemble_logits(model.ensemble_b, xb, model.catalog))
    unc = dmss.assess_batch(bundle_a, bundle_b)
    lo_a, lo_b = bundle_a.mean_logits, bundle_b.mean_logits
    if not cfg.use_dmss:
        a_dom = np.ones(len(samples), dtype=bool)
        fused = 0.5 * (lo_a + lo_b)
        return BatchPrediction(bundle_a, bundle_b, unc, a_dom, fused, np.zeros_like(fused), fused, pres_a, pres_b)
    a_dom = unc.a_dominant.copy()
    if cfg.force_dominant_on_missing:
        a_dom = np.where(pres_a & ~pres_b, True, np.where(pres_b & ~pres_a, False, a_dom))
    if cfg.use_csmf:
        fused, aux = fuse_batch(lo_a, lo_b, model.sim_a, model.sim_b, a_dom)
    else:
        fused = np.where(a_dom[:, None], lo_a, lo_b)
        aux = np.zeros_like(fused)
    lo_dom = np.where(a_dom[:, None], lo_a, lo_b)
    return BatchPrediction(bundle_a, bundle_b, unc, a_dom, lo_dom, aux, fused, pres_a, pres_b)


def predict(model: ModelState, sample: MultimodalSample) -> FusionDecision:
    """Full decision record for one sample."""
    padded = pad_missing(sample, model.dim_a, model.dim_b)
    return predict_batch(model, [padded]).decision(0)


# ---------------------------------------------------------------------------
# fully connected baseline
# ---------------------------------------------------------------------------


@dataclass
class FcBaselineState:
    """Per-modality linear softmax classifiers over all N classes."""

    weights: dict[str, np.ndarray]
    biases: dict[str, np.ndarray]
    n_classes: int
    log: list[dict] = field(default_factory=list)

    def logits(self, modality: str, x) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.weights[modality] + self.biases[modality]

    def predict_batch(self, samples) -> np.ndarray:
        """Mean of the logits of the modalities present in each sample."""
        samples = list(samples)
        dim_a = self.weights["A"].shape[0]
        dim_b = self.weights["B"].shape[0]
        xa, xb = stack_features(samples, dim_a, dim_b)
        pa = np.array([bool(s.present_a) for s in samples], dtype=float)[:, None]
        pb = np.array([bool(s.present_b) for s in samples], dtype=float)[:, None]
        fused = (pa * self.logits("A", xa) + pb * self.logits("B", xb)) / (pa + pb)
        return np.argmax(fused, axis=1)


def train_fc_baseline(dataset: MmhclDataset, config: TrainConfig) -> FcBaselineState:
    """Linear classifiers trained with cross-entropy on each modality's seen classes."""
    config.validate()
    n = dataset.partition.n_classes
    rng = np.random.default_rng([config.seed, 404])
    params: dict[str, MlpParams] = {}
    for m, dim in (("A", dataset.dim_a), ("B", dataset.dim_b)):
        # convex model: start from zero so unseen-class columns only ever move down
        params[m] = MlpParams([np.zeros((dim, n))], [np.zeros(n)])
    states = {m: AdamState(lr=config.lr, weight_decay=config.weight_decay) for m in "AB"}
    data = {m: dataset.train_arrays(m) for m in "AB"}
    history = []
    for epoch in range(1, config.epochs + 1):
        batches = {m: _batches(len(data[m][1]), config.batch_size, rng) for m in "AB"}
        sums = {"A": 0.0, "B": 0.0}
        for step in range(max(len(batches["A"]), len(batches["B"]))):
            for m in "AB":
                if step >= len(batches[m]):
                    continue
                idx = batches[m][step]
                x, y = data[m][0][idx], data[m][1][idx]
                p = params[m]
                logits = x @ p.weights[0] + p.biases[0]
                probs = softmax(logits)
                sums[m] += float(_cross_entropy(probs, y).sum())
                g = probs
                g[np.arange(len(y)), y] -= 1.0
                g /= len(y)
                adam_step(states[m], p, MlpGrads([x.T @ g], [g.sum(axis=0)]))
        history.append(
            {"epoch": epoch, **{f"loss_{m}": sums[m] / max(len(data[m][1]), 1) for m in "AB"}}
        )
    return FcBaselineState(
        {m: params[m].weights[0] for m in "AB"}, {m: params[m].biases[0] for m in "AB"}, n, history
    )


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def _param_blocks(model: ModelState):
    yield "catalog.embeddings", model.catalog.embeddings
    yield "sim_a", model.sim_a.values
    yield "sim_b", model.sim_b.values
    for ens in (model.ensemble_a, model.ensemble_b):
        for i, module in enumerate(ens.modules):
            for path, arr in module.mapper.arrays():
                yield f"ensemble_{ens.modality}.modules[{i}].{path}", arr


def save_checkpoint(model: ModelState, path) -> None:
    """Write magic, format version, JSON header, then float64 LE parameter blocks.

    Layout: ``MMHCLCKP`` | u32 version | u64 header length | header JSON |
    blocks in the order listed in ``header["blocks"]``.
    """
    blocks = list(_param_blocks(model))
    header = {
        "version": CHECKPOINT_VERSION,
        "dims": {"A": model.dim_a, "B": model.dim_b, "s": model.catalog.dim, "n_classes": model.catalog.n_classes},
        "config": asdict(model.config),
        "class_names": list(model.catalog.names),
        "architectures": {
            ens.modality: [m.mapper.layer_dims for m in ens.modules] for ens in (model.ensemble_a, model.ensemble_b)
        },
        "gammas": {ens.modality: [m.gamma for m in ens.modules] for ens in (model.ensemble_a, model.ensemble_b)},
        "pruned_k": {"A": model.sim_a.pruned_k, "B": model.sim_b.pruned_k},
        "seen": {"A": list(model.seen_a), "B": list(model.seen_b)},
        "log": model.log,
        "blocks": [{"name": name, "shape": list(arr.shape)} for name, arr in blocks],
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<IQ", CHECKPOINT_VERSION, len(head)))
        fh.write(head)
        for _, arr in blocks:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> ModelState:
    raw = Path(path).read_bytes()
    prefix = len(CHECKPOINT_MAGIC) + 12
    if len(raw) < prefix or not raw.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic or truncated preamble)")
    version, head_len = struct.unpack("<IQ", raw[len(CHECKPOINT_MAGIC) : prefix])
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"{path}: checkpoint format version {version}, this library reads version {CHECKPOINT_VERSION}"
        )
    try:
        header = json.loads(raw[prefix : prefix + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from None
    offset = prefix + head_len
    arrays = {}
    for block in header["blocks"]:
        count = int(np.prod(block["shape"])) if block["shape"] else 1
        end = offset + 8 * count
        if end > len(raw):
            raise CheckpointError(f"{path}: truncated in block {block['name']}")
        arrays[block["name"]] = np.frombuffer(raw[offset:end], dtype="<f8").reshape(block["shape"]).astype(np.float64)
        offset = end
    if offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - offset} trailing bytes after last block")

    config = TrainConfig.from_dict(header["config"])
    catalog = ClassCatalog(tuple(header["class_names"]), arrays["catalog.embeddings"])
    ensembles = {}
    for mod in "AB":
        modules = []
        for i, dims in enumerate(header["architectures"][mod]):
            prefix_ = f"ensemble_{mod}.modules[{i}]"
            n_layers = len(dims) - 1
            ws = [arrays[f"{prefix_}.layers[{j}].weight"] for j in range(n_layers)]
            bs = [arrays[f"{prefix_}.layers[{j}].bias"] for j in range(n_layers)]
            modules.append(OsrsModule(MlpParams(ws, bs), header["gammas"][mod][i]))
        ensembles[mod] = ModalityEnsemble(mod, modules, header["dims"][mod])
    return ModelState(
        ensembles["A"],
        ensembles["B"],
        catalog,
        SimilarityMatrix(arrays["sim_a"], header["pruned_k"]["A"]),
        SimilarityMatrix(arrays["sim_b"], header["pruned_k"]["B"]),
        config,
        header["log"],
        tuple(header["seen"]["A"]),
        tuple(header["seen"]["B"]),
    )


__all__ = [
    "DEFAULT_ARCHITECTURES",
    "TrainConfig",
    "ModelState",
    "FcBaselineState",
    "BatchPrediction",
    "modality_loss",
    "total_loss",
    "ensemble_loss_and_grads",
    "init_model",
    "train",
    "predict",
    "predict_batch",
    "train_fc_baseline",
    "save_checkpoint",
    "load_checkpoint",
    "write_train_log",
]
