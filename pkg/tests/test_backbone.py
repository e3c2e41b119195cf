import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from scenechange.backbone import (
    BackendUnavailable,
    EmbeddingMap,
    EmptyMaskError,
    LayerRangeError,
    MaskProposal,
    ProposerConfig,
    SyntheticBackend,
    downscale_mask,
    filter_proposals,
    make_backend,
    mask_embedding,
)


def _img(seed=0, size=32):
    return np.random.default_rng(seed).integers(0, 256, (size, size, 3), dtype=np.uint8)


def test_default_proposer_config():
    assert ProposerConfig() == ProposerConfig(32, 0.7, 0.7, 0.7)


@pytest.mark.parametrize("kwargs", [{"points_per_side": 0}, {"nms_threshold": 1.5},
                                    {"predicted_iou_threshold": -0.1}, {"stability_threshold": 2}])
def test_proposer_config_validation(kwargs):
    with pytest.raises(ValueError):
        ProposerConfig(**kwargs)


def test_facets_small_image_deterministic(synthetic):
    img = _img(size=8)
    a = synthetic.extract_facets(img, 0, "key")
    b = synthetic.extract_facets(img, 0, "key")
    assert a.data.shape[0] == 2 and a.heads == 2
    assert (a.kind, a.layer) == ("key", 0)
    assert np.isfinite(a.data).all()
    assert np.array_equal(a.data, b.data)


def test_facet_kinds_differ(synthetic):
    img = _img()
    kinds = {k: synthetic.extract_facets(img, 1, k).data for k in ("query", "key", "value")}
    assert not np.array_equal(kinds["key"], kinds["value"])
    with pytest.raises(ValueError):
        synthetic.extract_facets(img, 1, "bogus")


def test_invalid_layer(synthetic):
    with pytest.raises(LayerRangeError):
        synthetic.extract_facets(_img(), 999)
    with pytest.raises(IndexError):
        synthetic.extract_embedding(_img(), -1)


def test_resolve_layer_names(synthetic):
    assert synthetic.resolve_layer(None) == synthetic.default_layer
    assert synthetic.resolve_layer("last") == synthetic.num_layers - 1
    assert synthetic.resolve_layer("initial") == 0
    assert synthetic.resolve_layer(2) == 2
    with pytest.raises(LayerRangeError):
        synthetic.resolve_layer("deepest")


def test_embedding_constant_image_is_constant(synthetic):
    img = np.full((40, 40, 3), 77, dtype=np.uint8)
    for layer in range(synthetic.num_layers):
        e = synthetic.extract_embedding(img, layer).data
        assert np.isfinite(e).all()
        assert (e == e[0, 0]).all()


def test_embedding_deterministic(synthetic):
    img = _img(3)
    assert np.array_equal(synthetic.extract_embedding(img).data, synthetic.extract_embedding(img).data)
    assert synthetic.extract_embedding(img).layer == synthetic.last_layer


def test_identical_images_identical_facets(synthetic):
    img = _img(5)
    assert np.array_equal(synthetic.extract_facets(img.copy(), 2).data, synthetic.extract_facets(img, 2).data)


def test_two_region_image_gives_two_disjoint_proposals(synthetic):
    img = np.zeros((32, 32, 3), dtype=np.uint8)
    img[:, 16:] = (200, 40, 90)
    props = synthetic.propose_masks(img)
    assert len(props) == 2
    assert not (props[0].mask & props[1].mask).any()
    assert (props[0].mask | props[1].mask).all()
    # oracle: connected components of the quantised colour codes
    q = img // 32
    codes = q[..., 0] * 64 + q[..., 1] * 8 + q[..., 2]
    n = sum(ndimage.label(codes == c)[1] for c in np.unique(codes))
    assert n == len(props)


def test_blank_image_single_proposal(synthetic):
    props = synthetic.propose_masks(np.zeros((24, 24, 3), dtype=np.uint8))
    assert len(props) == 1 and props[0].mask.all() and props[0].area == 24 * 24


def test_proposals_at_image_resolution_and_filtered(synthetic):
    img = _img(1, 48) // 64 * 64
    cfg = ProposerConfig(points_per_side=4)
    props = synthetic.propose_masks(img, cfg)
    assert 0 < len(props) <= 16
    for p in props:
        assert p.mask.shape == (48, 48)
        assert p.predicted_iou >= cfg.predicted_iou_threshold and p.stability >= cfg.stability_threshold


def test_filter_proposals_thresholds():
    m = np.ones((4, 4), dtype=bool)
    props = [MaskProposal(m, 0.9, 0.9), MaskProposal(m, 0.5, 0.9), MaskProposal(m, 0.9, 0.69)]
    kept = filter_proposals(props, ProposerConfig())
    assert kept == [props[0]]


def test_mask_proposal_rejects_empty():
    with pytest.raises(ValueError):
        MaskProposal(np.zeros((3, 3), dtype=bool))


def test_mask_embedding_examples():
    data = np.arange(2 * 2 * 3, dtype=np.float64).reshape(2, 2, 3)
    emb = EmbeddingMap(0, data)
    full = mask_embedding(emb, np.ones((2, 2), bool))
    assert np.allclose(full.vector, data.mean(axis=(0, 1)))
    assert full.source_mask_area == 4
    one = np.zeros((2, 2), bool)
    one[1, 0] = True
    assert np.array_equal(mask_embedding(emb, one).vector, data[1, 0])
    two = np.zeros((2, 2), bool)
    two[0, 0] = two[1, 1] = True
    assert np.allclose(mask_embedding(emb, two).vector, (data[0, 0] + data[1, 1]) / 2)


def test_mask_embedding_downscales_nearest():
    emb = EmbeddingMap(0, np.arange(4, dtype=np.float64).reshape(2, 2, 1))
    m = np.zeros((8, 8), bool)
    m[4:, 4:] = True
    assert mask_embedding(emb, m).vector[0] == 3.0
    tiny = np.zeros((8, 8), bool)
    tiny[0, 0] = True  # cell centre sampled at (2, 2): misses
    with pytest.raises(EmptyMaskError):
        mask_embedding(emb, tiny)


def test_downscale_samples_cell_centres():
    m = np.zeros((8, 8), bool)
    m[2, 2] = True
    assert downscale_mask(m, (2, 2)).tolist() == [[True, False], [False, False]]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_mask_embedding_union_is_area_weighted_mean(seed):
    rng = np.random.default_rng(seed)
    emb = EmbeddingMap(0, rng.normal(size=(6, 6, 4)))
    labels = rng.integers(0, 3, size=(6, 6))
    a, b = labels == 1, labels == 2
    if not a.any() or not b.any():
        return
    ea, eb = mask_embedding(emb, a), mask_embedding(emb, b)
    eu = mask_embedding(emb, a | b)
    na, nb = a.sum(), b.sum()
    assert np.allclose(eu.vector, (na * ea.vector + nb * eb.vector) / (na + nb), rtol=0, atol=1e-12)


def test_unknown_backend():
    with pytest.raises(ValueError):
        make_backend("dinov2")


def test_vith_adapter_without_weights_is_unavailable(tmp_path):
    with pytest.raises(BackendUnavailable) as err:
        make_backend("vith-adapter", str(tmp_path / "missing.pth"))
    assert "vith-adapter" in str(err.value)


def test_synthetic_rejects_bad_image(synthetic):
    with pytest.raises(ValueError):
        synthetic.extract_facets(np.zeros((8, 8), dtype=np.uint8), 0)


def test_backend_thread_safety(synthetic):
    from concurrent.futures import ThreadPoolExecutor

    img = _img(9, 64)
    ref = synthetic.extract_facets(img, 1).data
    with ThreadPoolExecutor(4) as pool:
        outs = list(pool.map(lambda _: synthetic.extract_facets(img, 1).data, range(8)))
    assert all(np.array_equal(o, ref) for o in outs)


def test_custom_synthetic_geometry():
    be = SyntheticBackend(patch_size=4, num_layers=2, num_heads=3)
    f = be.extract_facets(_img(size=16), 1)
    assert f.data.shape[:3] == (3, 4, 4)
