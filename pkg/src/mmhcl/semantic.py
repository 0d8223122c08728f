"""Class catalog, class-similarity matrix and its top-k pruning."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError, LoadError
from .numerics import row_normalize


@dataclass(frozen=True)
class ClassCatalog:
    """Class names plus their semantic embeddings, one row per class.

    Row order is the class index order used everywhere else.
    """

    names: tuple[str, ...]
    embeddings: np.ndarray

    def __post_init__(self):
        emb = np.array(self.embeddings, dtype=np.float64)
        names = tuple(str(n) for n in self.names)
        if emb.ndim != 2 or emb.shape[0] != len(names):
            raise InvalidArgumentError(f"{len(names)} names but embedding matrix of shape {emb.shape}")
        if len(names) < 2:
            raise InvalidArgumentError("a catalog needs at least two classes")
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise InvalidArgumentError(f"duplicate class name(s): {', '.join(dupes)}")
        if not np.all(np.isfinite(emb)):
            raise InvalidArgumentError("embeddings must be finite")
        zero = np.flatnonzero(np.linalg.norm(emb, axis=1) == 0)
        if zero.size:
            raise InvalidArgumentError(f"zero-norm embedding for class {names[zero[0]]!r}")
        emb.setflags(write=False)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "embeddings", emb)

    @property
    def n_classes(self) -> int:
        return len(self.names)

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    @property
    def unit_embeddings(self) -> np.ndarray:
        return row_normalize(self.embeddings)[0]


def load_catalog(path) -> ClassCatalog:
    """Read an embeddings CSV: header ``name,e0,...,e{d-1}``, one class per row."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise LoadError(f"{path}: empty file")
    header = rows[0]
    if not header or header[0] != "name" or header[1:] != [f"e{i}" for i in range(len(header) - 1)]:
        raise LoadError(f"{path}: header must be name,e0,e1,... got {','.join(header)}")
    dim = len(header) - 1
    if dim < 1:
        raise LoadError(f"{path}: no embedding columns")
    names, vecs = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != dim + 1:
            raise LoadError(f"{path}:{lineno}: expected {dim + 1} fields, got {len(row)}")
        try:
            vec = [float(v) for v in row[1:]]
        except ValueError as exc:
            raise LoadError(f"{path}:{lineno}: {exc}") from None
        names.append(row[0])
        vecs.append(vec)
    try:
        return ClassCatalog(tuple(names), np.array(vecs, dtype=np.float64).reshape(len(vecs), dim))
    except InvalidArgumentError as exc:
        raise LoadError(f"{path}: {exc}") from None


def save_catalog(catalog: ClassCatalog, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name"] + [f"e{i}" for i in range(catalog.dim)])
        for name, vec in zip(catalog.names, catalog.embeddings):
            # repr round-trips float64 exactly
            writer.writerow([name] + [repr(float(v)) for v in vec])


def random_catalog(
    n_classes: int,
    dim: int,
    seed: int = 0,
    rank: int | None = None,
    residual: float = 0.0,
    n_groups: int = 0,
    group_spread: float = 0.5,
) -> ClassCatalog:
    """Synthetic unit-norm class embeddings.

    With ``rank`` set, embeddings are drawn in a random ``rank``-dimensional
    subspace (like attribute vectors: a few latent factors shared by all
    classes) plus ``residual`` isotropic noise. With ``n_groups`` set, class
    ``i`` sits at ``group_spread`` around the center of group
    ``i % n_groups``, so each class has a handful of close relatives.
    """
    if n_classes < 2 or dim < 1:
        raise InvalidArgumentError("need n_classes >= 2 and dim >= 1")
    rng = np.random.default_rng(seed)
    if rank is not None and not 1 <= rank <= dim:
        raise InvalidArgumentError(f"rank must be in [1, {dim}]")
    basis = np.eye(dim) if rank is None else np.linalg.qr(rng.standard_normal((dim, rank)))[0]
    k = basis.shape[1]
    emb = row_normalize(rng.standard_normal((n_classes, k)))[0]
    if n_groups:
        centers = row_normalize(rng.standard_normal((n_groups, k)))[0]
        emb = centers[np.arange(n_classes) % n_groups] + group_spread * emb
    emb = row_normalize(emb @ basis.T)[0]
    if residual:
        emb = emb + residual * rng.standard_normal((n_classes, dim)) / np.sqrt(dim)
    names = tuple(f"class_{i:03d}" for i in range(n_classes))
    return ClassCatalog(names, row_normalize(emb)[0])


@dataclass(frozen=True)
class SimilarityMatrix:
    values: np.ndarray
    pruned_k: int | None = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        if vals.ndim != 2 or vals.shape[0] != vals.shape[1]:
            raise InvalidArgumentError(f"similarity matrix must be square, got {vals.shape}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n_classes(self) -> int:
        return self.values.shape[0]


def class_similarity(catalog: ClassCatalog) -> SimilarityMatrix:
    """Pairwise cosine similarity between all class embeddings."""
    unit = catalog.unit_embeddings
    s = unit @ unit.T
    # exact symmetry and unit diagonal regardless of rounding
    s = np.clip(0.5 * (s + s.T), -1.0, 1.0)
    np.fill_diagonal(s, 1.0)
    return SimilarityMatrix(s)


def prune_topk(
    sim: SimilarityMatrix,
    k: int,
    rows=None,
    row_normalize: bool = False,
) -> SimilarityMatrix:
    """Keep the ``k`` largest entries of every row and zero the rest.

    Ties are broken toward the lower class index. If ``rows`` is given,
    only those rows are pruned and kept; all other rows are zeroed (the
    "seen-only" scope). ``row_normalize`` rescales each kept row so its
    absolute values sum to one.
    """
    if sim.pruned_k is not None:
        raise InvalidArgumentError("matrix is already pruned")
    n = sim.n_classes
    if not isinstance(k, (int, np.integer)) or not 1 <= k <= n:
        raise InvalidArgumentError(f"k must be in [1, {n}], got {k}")
    s = sim.values
    rank = s.copy()
    # the diagonal must survive even if another class has an identical embedding
    np.fill_diagonal(rank, np.inf)
    # stable sort on -rank keeps lower index first among equal values
    order = np.argsort(-rank, axis=1, kind="stable")[:, :k]
    mask = np.zeros_like(s, dtype=bool)
    np.put_along_axis(mask, order, True, axis=1)
    if rows is not None:
        keep_rows = np.zeros(n, dtype=bool)
        keep_rows[np.asarray(list(rows), dtype=int)] = True
        mask &= keep_rows[:, None]
    out = np.where(mask, s, 0.0)
    if row_normalize:
        total = np.abs(out).sum(axis=1, keepdims=True)
        out = np.divide(out, total, out=np.zeros_like(out), where=total > 0)
    return SimilarityMatrix(out, pruned_k=int(k))
