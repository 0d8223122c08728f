import numpy as np
import pytest

from mmhcl.errors import InvalidArgumentError
from mmhcl.numerics import cosine, mlp_forward
from mmhcl.osrs import (
    DEFAULT_ARCHITECTURES,
    ModalityEnsemble,
    ensemble_logits,
    ensemble_predict,
    make_ensemble,
    map_to_semantic,
    module_logits_and_backward,
    scaled_cosine_logits,
)
from mmhcl.semantic import ClassCatalog


@pytest.fixture
def catalog(rng):
    return ClassCatalog(tuple(f"c{i}" for i in range(6)), rng.standard_normal((6, 5)))


def test_default_ensemble_shapes(catalog):
    ens = make_ensemble("A", 7, 5, k=4, seed=0)
    assert ens.k == 4
    assert [m.mapper.layer_dims for m in ens.modules] == [[7, *h, 5] for h in DEFAULT_ARCHITECTURES]
    assert all(m.gamma == 5.0 for m in ens.modules)


def test_ensemble_needs_two_modules():
    with pytest.raises(InvalidArgumentError):
        make_ensemble("A", 3, 2, k=1)
    ens = make_ensemble("A", 3, 2, k=2)
    with pytest.raises(InvalidArgumentError):
        ModalityEnsemble("A", ens.modules[:1], 3)
    with pytest.raises(InvalidArgumentError):
        ModalityEnsemble("C", ens.modules, 3)


def test_modalities_get_different_streams():
    a = make_ensemble("A", 4, 3, k=2, seed=0)
    b = make_ensemble("B", 4, 3, k=2, seed=0)
    assert not np.array_equal(a.modules[0].mapper.weights[0], b.modules[0].mapper.weights[0])


def test_scaled_cosine_matches_definition(catalog, rng):
    s = rng.standard_normal(5)
    logits, deg = scaled_cosine_logits(s, catalog, gamma=5.0)
    expect = [25.0 * cosine(s, c) for c in catalog.embeddings]
    np.testing.assert_allclose(logits, expect, rtol=1e-13)
    assert deg is False
    assert np.all(np.abs(logits) <= 25.0)


def test_scaled_cosine_scale_invariant(catalog, rng):
    s = rng.standard_normal((3, 5))
    a, _ = scaled_cosine_logits(s, catalog, 5.0)
    b, _ = scaled_cosine_logits(7.5 * s, catalog, 5.0)
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_zero_vector_gives_zero_logits(catalog):
    logits, deg = scaled_cosine_logits(np.zeros((2, 5)), catalog, 5.0)
    assert np.array_equal(logits, np.zeros((2, 6)))
    assert deg.tolist() == [True, True]


def test_dimension_mismatch(catalog):
    with pytest.raises(InvalidArgumentError):
        scaled_cosine_logits(np.ones(4), catalog, 5.0)
    ens = make_ensemble("A", 3, 4, k=2)
    with pytest.raises(InvalidArgumentError):
        ensemble_logits(ens, np.ones((2, 3)), catalog)
    with pytest.raises(InvalidArgumentError):
        map_to_semantic(ens.modules[0], np.ones(4))


def test_bundle_consistency(catalog, rng):
    ens = make_ensemble("B", 4, 5, k=3, seed=2)
    x = rng.standard_normal((6, 4))
    b = ensemble_predict(ens, x, catalog)
    assert b.logits.shape == (3, 6, 6)
    np.testing.assert_allclose(b.probs.sum(axis=-1), 1.0)
    np.testing.assert_allclose(b.mean_logits, b.logits.mean(axis=0))
    single = ensemble_predict(ens, x[2], catalog)
    np.testing.assert_allclose(single.logits, b.logits[:, 2], atol=1e-14)
    # module logits come from that module's mapper alone
    s, _ = mlp_forward(ens.modules[1].mapper, x)
    np.testing.assert_allclose(b.logits[1], scaled_cosine_logits(s, catalog, 5.0)[0], atol=1e-13)


def test_bias_free_mapper_sends_zero_to_zero(catalog):
    ens = make_ensemble("A", 4, 5, k=4, seed=0)
    b = ensemble_predict(ens, np.zeros(4), catalog)
    assert b.degenerate is True
    np.testing.assert_allclose(b.mean_probs, np.full(6, 1 / 6))


def test_cosine_backward_finite_differences(catalog, rng):
    ens = make_ensemble("A", 4, 5, k=2, seed=5, architectures=((3,), ()))
    module = ens.modules[0]
    x = rng.standard_normal((3, 4))
    g = rng.standard_normal((3, 6))
    unit_c = catalog.unit_embeddings
    _, backward = module_logits_and_backward(module, x, unit_c)
    grads = backward(g)
    w = module.mapper.weights[0]
    h = 1e-6
    for idx in [(0, 0), (1, 2), (3, 1)]:
        old = w[idx]
        w[idx] = old + h
        up = np.sum(module_logits_and_backward(module, x, unit_c)[0] * g)
        w[idx] = old - h
        down = np.sum(module_logits_and_backward(module, x, unit_c)[0] * g)
        w[idx] = old
        assert grads.weights[0][idx] == pytest.approx((up - down) / (2 * h), rel=1e-6)


def test_zero_norm_rows_get_zero_gradient(catalog):
    ens = make_ensemble("A", 4, 5, k=2, seed=5)
    _, backward = module_logits_and_backward(ens.modules[0], np.zeros((2, 4)), catalog.unit_embeddings)
    grads = backward(np.ones((2, 6)))
    assert all(not np.any(w) for w in grads.weights)
