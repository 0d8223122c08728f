"""Heterogeneous class-set data: partitions, samples, synthesis and scenarios.

Modality A and modality B each see only part of the classes during
training. Test samples may carry one or both modalities and any label.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError, LoadError
from .semantic import ClassCatalog, random_catalog

log = logging.getLogger(__name__)

SCENARIOS = ("A_s", "B_s", "A_u", "B_u", "A_s+B_u", "A_u+B_s", "A_all+B_all", "mix")
#: the six scenarios pooled into ``mix``
MIX_SCENARIOS = ("A_s", "B_s", "A_u", "B_u", "A_s+B_u", "A_u+B_s")


@dataclass(frozen=True)
class ClassPartition:
    n_classes: int
    seen_a: frozenset[int]
    seen_b: frozenset[int]

    def __post_init__(self):
        object.__setattr__(self, "seen_a", frozenset(int(c) for c in self.seen_a))
        object.__setattr__(self, "seen_b", frozenset(int(c) for c in self.seen_b))
        everything = set(range(self.n_classes))
        if not (self.seen_a | self.seen_b) <= everything:
            raise InvalidArgumentError("seen sets contain out-of-range classes")
        if not (self.seen_a | self.seen_b) == everything:
            raise InvalidArgumentError("seen sets must cover every class")

    @property
    def all_classes(self) -> list[int]:
        return list(range(self.n_classes))

    @property
    def unseen_a(self) -> frozenset[int]:
        return frozenset(range(self.n_classes)) - self.seen_a

    @property
    def unseen_b(self) -> frozenset[int]:
        return frozenset(range(self.n_classes)) - self.seen_b

    def seen(self, modality: str) -> frozenset[int]:
        return self.seen_a if modality == "A" else self.seen_b

    def to_dict(self) -> dict:
        return {"n_classes": self.n_classes, "seen_A": sorted(self.seen_a), "seen_B": sorted(self.seen_b)}

    @classmethod
    def from_dict(cls, d: dict) -> ClassPartition:
        return cls(int(d["n_classes"]), frozenset(d["seen_A"]), frozenset(d["seen_B"]))


def split_classes(n_classes: int, seed: int = 0) -> ClassPartition:
    """Shuffle classes by seed; first ceil(N/2) are seen by A, the rest by B."""
    if n_classes < 2:
        raise InvalidArgumentError(f"need at least 2 classes, got {n_classes}")
    perm = np.random.default_rng(seed).permutation(n_classes)
    half = (n_classes + 1) // 2
    return ClassPartition(n_classes, frozenset(perm[:half].tolist()), frozenset(perm[half:].tolist()))


@dataclass
class MultimodalSample:
    id: str
    label: int
    feat_a: np.ndarray | None = None
    feat_b: np.ndarray | None = None
    present_a: bool | None = None
    present_b: bool | None = None

    def __post_init__(self):
        if self.present_a is None:
            self.present_a = self.feat_a is not None
        if self.present_b is None:
            self.present_b = self.feat_b is not None
        if not (self.present_a or self.present_b):
            raise InvalidArgumentError(f"sample {self.id!r} has no modality present")

    @property
    def is_complete(self) -> bool:
        return bool(self.present_a and self.present_b)


def pad_missing(sample: MultimodalSample, dim_a: int, dim_b: int) -> MultimodalSample:
    """Fill absent modalities with zero vectors; presence flags are kept."""
    if sample.feat_a is not None and sample.feat_b is not None:
        return sample
    return MultimodalSample(
        sample.id,
        sample.label,
        sample.feat_a if sample.feat_a is not None else np.zeros(dim_a),
        sample.feat_b if sample.feat_b is not None else np.zeros(dim_b),
        sample.present_a,
        sample.present_b,
    )


def stack_features(samples, dim_a: int, dim_b: int) -> tuple[np.ndarray, np.ndarray]:
    """Zero-padded feature matrices ``(B, d_A)`` and ``(B, d_B)``."""
    xa = np.zeros((len(samples), dim_a))
    xb = np.zeros((len(samples), dim_b))
    for i, s in enumerate(samples):
        if s.present_a and s.feat_a is not None:
            xa[i] = s.feat_a
        if s.present_b and s.feat_b is not None:
            xb[i] = s.feat_b
    return xa, xb


@dataclass
class MmhclDataset:
    dim_a: int
    dim_b: int
    partition: ClassPartition
    train: list[MultimodalSample]
    test: list[MultimodalSample]
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for s in self.train + self.test:
            if not 0 <= s.label < self.partition.n_classes:
                raise InvalidArgumentError(f"sample {s.id!r}: label {s.label} out of range")
            if s.present_a and s.feat_a is not None and s.feat_a.shape != (self.dim_a,):
                raise InvalidArgumentError(f"sample {s.id!r}: modality A has shape {s.feat_a.shape}")
            if s.present_b and s.feat_b is not None and s.feat_b.shape != (self.dim_b,):
                raise InvalidArgumentError(f"sample {s.id!r}: modality B has shape {s.feat_b.shape}")
        for s in self.train:
            if s.present_a and s.label not in self.partition.seen_a:
                raise InvalidArgumentError(
                    f"training sample {s.id!r} carries modality A but class {s.label} is not seen by A"
                )
            if s.present_b and s.label not in self.partition.seen_b:
                raise InvalidArgumentError(
                    f"training sample {s.id!r} carries modality B but class {s.label} is not seen by B"
                )

    def train_arrays(self, modality: str) -> tuple[np.ndarray, np.ndarray]:
        """Training features and labels of one modality."""
        key = "feat_a" if modality == "A" else "feat_b"
        rows = [s for s in self.train if getattr(s, key) is not None]
        dim = self.dim_a if modality == "A" else self.dim_b
        x = np.array([getattr(s, key) for s in rows]).reshape(len(rows), dim)
        y = np.array([s.label for s in rows], dtype=int)
        return x, y


# ---------------------------------------------------------------------------
# synthetic benchmark
# ---------------------------------------------------------------------------


@dataclass
class SyntheticSpec:
    """Parameters of the synthetic benchmark.

    Each class has, per modality, a cluster center
    ``rho * P @ c + (1 - rho) * g`` where ``c`` is the class embedding,
    ``P`` a fixed random linear map into the modality space and ``g`` a
    random class-specific vector. Samples are the center plus isotropic
    Gaussian noise. ``rho = 1`` makes unseen classes reachable through the
    embeddings; ``rho = 0`` removes that signal.

    The defaults are the standard benchmark. Its catalog puts class
    embeddings in a 10-dimensional subspace, with classes in pairs
    (``i`` and ``i + 10``) that share a group center, so every class has
    a close relative. Centers are scaled down so seen classes stay
    separable at ``sigma = 0.3`` while zero-shot transfer is partial.
    """

    n_classes: int = 20
    dim_a: int = 48
    dim_b: int = 64
    dim_s: int = 32
    n_train: int = 50
    n_test: int = 20
    sigma_a: float = 0.3
    sigma_b: float = 0.3
    rho: float = 0.9
    seed: int = 0
    # center geometry: overall scale and weight of the class-specific random part
    center_scale: float = 0.6
    random_scale: float = 0.5
    # synthetic class catalog (see semantic.random_catalog)
    catalog_rank: int | None = 10
    catalog_groups: int = 10
    catalog_spread: float = 1.0
    catalog_residual: float = 0.3

    def validate(self) -> None:
        for name in ("n_classes", "dim_a", "dim_b", "dim_s", "n_train", "n_test"):
            if getattr(self, name) < 1:
                raise InvalidArgumentError(f"{name} must be >= 1")
        if self.n_classes < 2:
            raise InvalidArgumentError("n_classes must be >= 2")
        if self.sigma_a < 0 or self.sigma_b < 0:
            raise InvalidArgumentError("noise scales must be non-negative")
        if not 0.0 <= self.rho <= 1.0:
            raise InvalidArgumentError("rho must lie in [0, 1]")
        if self.center_scale <= 0 or self.random_scale < 0:
            raise InvalidArgumentError("center_scale must be positive and random_scale non-negative")
        if self.catalog_rank is not None and not 1 <= self.catalog_rank <= self.dim_s:
            raise InvalidArgumentError(f"catalog_rank must be in [1, {self.dim_s}] or null")
        if self.catalog_groups < 0 or self.catalog_spread < 0 or self.catalog_residual < 0:
            raise InvalidArgumentError("catalog_groups, catalog_spread and catalog_residual must be non-negative")


def synthetic_catalog(spec: SyntheticSpec) -> ClassCatalog:
    """The class catalog that goes with ``spec`` (seeded by ``spec.seed``)."""
    spec.validate()
    return random_catalog(
        spec.n_classes,
        spec.dim_s,
        seed=spec.seed,
        rank=spec.catalog_rank,
        residual=spec.catalog_residual,
        n_groups=spec.catalog_groups,
        group_spread=spec.catalog_spread,
    )


def standard_benchmark(seed: int = 0, **changes) -> tuple[SyntheticSpec, ClassCatalog, MmhclDataset]:
    """Spec, catalog and dataset of the standard synthetic benchmark."""
    spec = SyntheticSpec(seed=seed, **changes)
    catalog = synthetic_catalog(spec)
    return spec, catalog, synthesize(spec, catalog)


def cluster_centers(spec: SyntheticSpec, catalog: ClassCatalog, modality: str) -> np.ndarray:
    """Per-class modality centers ``(N, d_M)``.

    Uses unit-normalized embeddings and a projection with standard normal
    entries, so both center components have unit variance per coordinate.
    """
    dim = spec.dim_a if modality == "A" else spec.dim_b
    rng = np.random.default_rng([spec.seed, 101, "AB".index(modality)])
    proj = rng.standard_normal((dim, catalog.dim))
    random_part = rng.standard_normal((catalog.n_classes, dim))
    aligned = catalog.unit_embeddings @ proj.T
    return spec.center_scale * (spec.rho * aligned + (1.0 - spec.rho) * spec.random_scale * random_part)


def synthesize(
    spec: SyntheticSpec, catalog: ClassCatalog, partition: ClassPartition | None = None
) -> MmhclDataset:
    """Draw a training and test set from ``spec``.

    Training: ``n_train`` unimodal samples per class in the modality that
    sees it. Test, per class: ``n_test`` A-only, ``n_test`` B-only and
    ``n_test`` complete samples.
    """
    spec.validate()
    if catalog.n_classes != spec.n_classes or catalog.dim != spec.dim_s:
        raise InvalidArgumentError(
            f"catalog is {catalog.n_classes}x{catalog.dim}, spec wants {spec.n_classes}x{spec.dim_s}"
        )
    if partition is None:
        partition = split_classes(spec.n_classes, spec.seed)
    centers = {m: cluster_centers(spec, catalog, m) for m in "AB"}
    sigma = {"A": spec.sigma_a, "B": spec.sigma_b}
    rng = np.random.default_rng([spec.seed, 202])

    def draw(mod, label, n):
        c = centers[mod][label]
        return c + sigma[mod] * rng.standard_normal((n, c.shape[0]))

    train: list[MultimodalSample] = []
    for mod in "AB":
        for label in sorted(partition.seen(mod)):
            for j, x in enumerate(draw(mod, label, spec.n_train)):
                kw = {"feat_a": x} if mod == "A" else {"feat_b": x}
                train.append(MultimodalSample(f"train-{mod}-{label:04d}-{j:04d}", label, **kw))

    test: list[MultimodalSample] = []
    for label in range(spec.n_classes):
        xa = draw("A", label, spec.n_test)
        xb = draw("B", label, spec.n_test)
        for j in range(spec.n_test):
            test.append(MultimodalSample(f"test-A-{label:04d}-{j:04d}", label, feat_a=xa[j]))
        for j in range(spec.n_test):
            test.append(MultimodalSample(f"test-B-{label:04d}-{j:04d}", label, feat_b=xb[j]))
        xa2 = draw("A", label, spec.n_test)
        xb2 = draw("B", label, spec.n_test)
        for j in range(spec.n_test):
            test.append(MultimodalSample(f"test-AB-{label:04d}-{j:04d}", label, feat_a=xa2[j], feat_b=xb2[j]))

    meta = {"synthetic": spec.__dict__.copy(), "test_per_class": {"A": spec.n_test, "B": spec.n_test, "AB": spec.n_test}}
    return MmhclDataset(spec.dim_a, spec.dim_b, partition, train, test, spec.seed, meta)


# ---------------------------------------------------------------------------
# evaluation scenarios
# ---------------------------------------------------------------------------


def scenario_membership(sample: MultimodalSample, partition: ClassPartition) -> list[str]:
    """Names of every scenario the sample belongs to."""
    y = sample.label
    names = []
    if sample.is_complete:
        names.append("A_s+B_u" if y in partition.seen_a and y not in partition.seen_b else None)
        names.append("A_u+B_s" if y in partition.seen_b and y not in partition.seen_a else None)
        names.append("A_all+B_all")
    elif sample.present_a:
        names.append("A_s" if y in partition.seen_a else "A_u")
    else:
        names.append("B_s" if y in partition.seen_b else "B_u")
    names = [n for n in names if n is not None]
    if any(n in MIX_SCENARIOS for n in names):
        names.append("mix")
    return names


def make_eval_scenarios(dataset: MmhclDataset) -> dict[str, list[MultimodalSample]]:
    """Group test samples into the eight named scenarios.

    Empty scenarios are dropped with a warning.
    """
    if not dataset.test:
        raise InvalidArgumentError("dataset has no test samples")
    out: dict[str, list[MultimodalSample]] = {name: [] for name in SCENARIOS}
    for s in dataset.test:
        for name in scenario_membership(s, dataset.partition):
            out[name].append(s)
    for name in SCENARIOS:
        if not out[name]:
            log.warning("scenario %s is empty and will be skipped", name)
            del out[name]
    return out


# ---------------------------------------------------------------------------
# features CSV
# ---------------------------------------------------------------------------


def write_features(path, rows) -> None:
    """Write ``(id, label, vector)`` rows as ``id,label,f0,...``."""
    rows = list(rows)
    dim = len(rows[0][2]) if rows else 0
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "label"] + [f"f{i}" for i in range(dim)])
        for sid, label, vec in rows:
            w.writerow([sid, "" if label is None else int(label)] + [repr(float(v)) for v in vec])


def read_features(path) -> tuple[dict[str, tuple[int | None, np.ndarray]], int]:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:2] != ["id", "label"]:
        raise LoadError(f"{path}: header must start with id,label")
    dim = len(rows[0]) - 2
    if rows[0][2:] != [f"f{i}" for i in range(dim)]:
        raise LoadError(f"{path}: feature columns must be f0..f{dim - 1}")
    out: dict[str, tuple[int | None, np.ndarray]] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != dim + 2:
            raise LoadError(f"{path}:{lineno}: expected {dim + 2} fields, got {len(row)}")
        if row[0] in out:
            raise LoadError(f"{path}:{lineno}: duplicate id {row[0]!r}")
        try:
            label = int(row[1]) if row[1] != "" else None
            vec = np.array([float(v) for v in row[2:]])
        except ValueError as exc:
            raise LoadError(f"{path}:{lineno}: {exc}") from None
        out[row[0]] = (label, vec)
    return out, dim


def save_features(dataset: MmhclDataset, path_a, path_b) -> None:
    """Export a dataset; training ids are prefixed ``train-``, test ids ``test-``."""

    def rows(key, split):
        for s in split:
            if getattr(s, "present_" + key[-1]) and getattr(s, key) is not None:
                yield s.id, s.label, getattr(s, key)

    all_samples = dataset.train + dataset.test
    write_features(path_a, rows("feat_a", all_samples))
    write_features(path_b, rows("feat_b", all_samples))


def load_features(path_a, path_b, partition: ClassPartition, labels_path=None) -> MmhclDataset:
    """Build a dataset from two features CSVs.

    Samples are matched by id across files; an id present in both files is
    a complete sample. Ids starting with ``train-`` form the training set,
    all others the test set. ``labels_path`` (CSV ``id,label``) supplies
    labels when the feature files leave them empty.
    """
    feats_a, dim_a = read_features(path_a)
    feats_b, dim_b = read_features(path_b)
    labels: dict[str, int] = {}
    if labels_path is not None:
        with Path(labels_path).open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["id", "label"]:
                raise LoadError(f"{labels_path}: header must be id,label")
            for row in reader:
                if row:
                    labels[row[0]] = int(row[1])

    ids = list(dict.fromkeys(list(feats_a) + list(feats_b)))
    train, test = [], []
    for sid in ids:
        la = feats_a.get(sid, (None, None))[0]
        lb = feats_b.get(sid, (None, None))[0]
        found = {v for v in (la, lb, labels.get(sid)) if v is not None}
        if len(found) > 1:
            raise LoadError(f"id {sid!r}: conflicting labels {sorted(found)}")
        if not found:
            raise LoadError(f"id {sid!r}: no label in feature files or labels file")
        if labels_path is not None and sid not in labels:
            raise LoadError(f"id {sid!r} is missing from {labels_path}")
        sample = MultimodalSample(
            sid,
            found.pop(),
            feats_a[sid][1] if sid in feats_a else None,
            feats_b[sid][1] if sid in feats_b else None,
        )
        (train if sid.startswith("train-") else test).append(sample)
    try:
        return MmhclDataset(dim_a, dim_b, partition, train, test)
    except InvalidArgumentError as exc:
        raise LoadError(str(exc)) from None
