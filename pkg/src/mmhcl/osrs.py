"""Semantic mappers with scaled-cosine classification, grouped into ensembles.

Each module maps a modality feature vector into the class-embedding space
and scores it against every class by cosine similarity times ``gamma**2``.
An ensemble holds K such modules with different architectures for one
modality.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .numerics import MlpCache, MlpParams, init_mlp, mlp_backward, mlp_forward, row_normalize, softmax
from .semantic import ClassCatalog

#: hidden-layer widths of the default ensemble members, cycled when K > 4
DEFAULT_ARCHITECTURES: tuple[tuple[int, ...], ...] = ((), (256,), (512,), (512, 256))

MODALITIES = ("A", "B")


@dataclass
class OsrsModule:
    mapper: MlpParams
    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise InvalidArgumentError(f"gamma must be positive, got {self.gamma}")

    @property
    def input_dim(self) -> int:
        return self.mapper.in_dim

    @property
    def output_dim(self) -> int:
        return self.mapper.out_dim


@dataclass
class ModalityEnsemble:
    modality: str
    modules: list[OsrsModule]
    input_dim: int

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise InvalidArgumentError(f"modality must be one of {MODALITIES}, got {self.modality!r}")
        if len(self.modules) < 2:
            raise InvalidArgumentError(
                "an ensemble needs at least 2 modules: entropy spread is identically 0 for K=1"
            )
        dims = {(m.input_dim, m.output_dim) for m in self.modules}
        if len(dims) != 1 or next(iter(dims))[0] != self.input_dim:
            raise InvalidArgumentError(f"modules disagree on input/output dims: {sorted(dims)}")

    @property
    def k(self) -> int:
        return len(self.modules)

    @property
    def output_dim(self) -> int:
        return self.modules[0].output_dim


@dataclass
class PredictionBundle:
    """Outputs of one ensemble for one sample or a batch.

    ``logits`` and ``probs`` have shape ``(K, N)`` for a single sample or
    ``(K, B, N)`` for a batch; ``mean_logits``/``mean_probs`` drop the K
    axis. ``degenerate`` marks samples whose mapped vector had zero norm.
    """

    logits: np.ndarray
    probs: np.ndarray
    mean_logits: np.ndarray
    mean_probs: np.ndarray
    degenerate: np.ndarray | bool = field(default=False)

    @property
    def k(self) -> int:
        return self.logits.shape[0]


def make_ensemble(
    modality: str,
    input_dim: int,
    semantic_dim: int,
    k: int = 4,
    gamma: float = 5.0,
    seed: int = 0,
    architectures=DEFAULT_ARCHITECTURES,
) -> ModalityEnsemble:
    """Fresh ensemble; module ``i`` is initialized from its own seeded stream."""
    if k < 2:
        raise InvalidArgumentError("an ensemble needs K >= 2 modules")
    modules = []
    for i in range(k):
        hidden = tuple(architectures[i % len(architectures)])
        rng = np.random.default_rng([seed, MODALITIES.index(modality), i])
        mapper = init_mlp((input_dim, *hidden, semantic_dim), rng)
        modules.append(OsrsModule(mapper, float(gamma)))
    return ModalityEnsemble(modality, modules, input_dim)


def map_to_semantic(module: OsrsModule, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != module.input_dim:
        raise InvalidArgumentError(f"expected a vector of length {module.input_dim}, got shape {x.shape}")
    out, _ = mlp_forward(module.mapper, x[None, :])
    return out[0]


def scaled_cosine_logits(s_hat, class_embeddings, gamma: float) -> tuple[np.ndarray, np.ndarray | bool]:
    """``gamma**2 * cos(s_hat, c_i)`` for every class ``i``.

    ``s_hat`` is a vector or a batch of row vectors; ``class_embeddings``
    is a ``ClassCatalog`` or an ``(N, d)`` array. Zero-norm inputs (e.g.
    a zero-padded missing modality) give all-zero logits and are reported
    in the second return value instead of raising.
    """
    emb = class_embeddings.embeddings if isinstance(class_embeddings, ClassCatalog) else class_embeddings
    s = np.asarray(s_hat, dtype=np.float64)
    if s.shape[-1] != emb.shape[1]:
        raise InvalidArgumentError(f"semantic dim {s.shape[-1]} != embedding dim {emb.shape[1]}")
    unit_s, norms = row_normalize(s)
    unit_c = row_normalize(emb)[0]
    logits = gamma**2 * np.clip(unit_s @ unit_c.T, -1.0, 1.0)
    degenerate = norms == 0
    if np.ndim(degenerate) == 0:
        degenerate = bool(degenerate)
    return logits, degenerate


def _module_forward(module: OsrsModule, x: np.ndarray, unit_c: np.ndarray):
    s, cache = mlp_forward(module.mapper, x)
    unit_s, norms = row_normalize(s)
    logits = module.gamma**2 * (unit_s @ unit_c.T)
    return logits, (cache, unit_s, norms)


def module_logits_and_backward(module: OsrsModule, x: np.ndarray, unit_c: np.ndarray):
    """Forward a batch and return ``(logits, backward)``.

    ``backward(grad_logits)`` returns the mapper gradients. The cosine is
    differentiated exactly: for ``u = s/|s|``, ``du/ds = (I - u u^T)/|s|``.
    Zero-norm rows receive zero gradient.
    """
    logits, (cache, unit_s, norms) = _module_forward(module, x, unit_c)

    def backward(grad_logits: np.ndarray):
        g_unit = module.gamma**2 * (grad_logits @ unit_c)
        radial = np.sum(g_unit * unit_s, axis=1, keepdims=True)
        safe = np.where(norms > 0, norms, 1.0)[:, None]
        g_s = np.where(norms[:, None] > 0, (g_unit - radial * unit_s) / safe, 0.0)
        grads, _ = mlp_backward(module.mapper, cache, g_s)
        return grads

    return logits, backward


def ensemble_logits(ensemble: ModalityEnsemble, x, catalog: ClassCatalog) -> tuple[np.ndarray, np.ndarray]:
    """Per-module logits ``(K, B, N)`` for a batch, plus the zero-norm mask ``(B,)``.

    The mask is true where every module mapped the sample to the zero vector.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != ensemble.input_dim:
        raise InvalidArgumentError(f"batch of shape {x.shape} does not fit input dim {ensemble.input_dim}")
    if catalog.dim != ensemble.output_dim:
        raise InvalidArgumentError(f"catalog dim {catalog.dim} != mapper output dim {ensemble.output_dim}")
    unit_c = catalog.unit_embeddings
    out = np.empty((ensemble.k, x.shape[0], catalog.n_classes))
    degenerate = np.ones(x.shape[0], dtype=bool)
    for i, module in enumerate(ensemble.modules):
        s, _ = mlp_forward(module.mapper, x)
        out[i], deg = scaled_cosine_logits(s, unit_c, module.gamma)
        degenerate &= deg
    return out, degenerate


def bundle_from_logits(logits: np.ndarray, degenerate=False) -> PredictionBundle:
    mean = logits.mean(axis=0)
    return PredictionBundle(logits, softmax(logits), mean, softmax(mean), degenerate)


def ensemble_predict(ensemble: ModalityEnsemble, x, catalog: ClassCatalog) -> PredictionBundle:
    """Run all K modules on a sample (vector) or batch (matrix)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    logits, degenerate = ensemble_logits(ensemble, np.atleast_2d(x), catalog)
    if single:
        return bundle_from_logits(logits[:, 0, :], bool(degenerate[0]))
    return bundle_from_logits(logits, degenerate)
