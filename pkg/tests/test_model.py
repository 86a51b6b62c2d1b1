import numpy as np
import pytest

from ucl.autodiff import Tensor, no_grad, precision
from ucl.model import (
    PAPER_CLASSIFIER_WIDTHS,
    ClassifierConfig,
    EncoderConfig,
    HeadConfig,
    classifier_forward,
    classifier_logits,
    encoder_forward,
    init_params,
    projection_forward,
)


def batch(n=4, size=32, seed=0):
    return np.random.default_rng(seed).uniform(size=(n, 3, size, size)).astype(np.float32)


def test_encoder_output_shape_desk_default():
    cfg = EncoderConfig()
    p = init_params(cfg, 0)
    with no_grad():
        f = encoder_forward(batch(40), p, cfg, "train")
    assert f.shape == (40, 128)


def test_encoder_rejects_wrong_inputs():
    cfg = EncoderConfig()
    p = init_params(cfg, 0)
    with pytest.raises(ValueError, match="32x32"):
        encoder_forward(batch(2, 16), p, cfg, "train")
    with pytest.raises(ValueError, match="RGB"):
        encoder_forward(np.zeros((2, 1, 32, 32)), p, cfg, "train")


def test_zero_weights_give_constant_features():
    cfg = EncoderConfig()
    p = init_params(cfg, 0)
    for name, t in p.tensors.items():
        if not name.endswith((".gamma", ".beta")):
            t.data[...] = 0.0
    p["enc.block2.bn.beta"].data[...] = np.linspace(0.1, 1.0, 128)
    with no_grad():
        f = encoder_forward(batch(3), p, cfg, "train").data
    np.testing.assert_allclose(f, np.broadcast_to(f[0], f.shape))
    np.testing.assert_allclose(f[0], np.linspace(0.1, 1.0, 128), rtol=1e-6)


def test_identical_inputs_identical_features_in_eval_mode():
    cfg = EncoderConfig()
    p = init_params(cfg, 1)
    with no_grad():
        encoder_forward(batch(8), p, cfg, "train")
        x = batch(3)
        x[2] = x[0]
        f = encoder_forward(x, p, cfg, "eval").data
    np.testing.assert_array_equal(f[0], f[2])


def test_config_invariants():
    with pytest.raises(ValueError, match="feature_dim"):
        EncoderConfig(widths=(32, 64), feature_dim=128)
    with pytest.raises(ValueError, match="smaller"):
        HeadConfig(feature_dim=64, proj_dim=64)
    with pytest.raises(ValueError, match="fixed"):
        ClassifierConfig(negative_slope=0.2)
    assert EncoderConfig.paper().feature_dim == 2048
    assert ClassifierConfig.paper().widths == PAPER_CLASSIFIER_WIDTHS == (2048, 4096, 2048, 256)


def test_projection_head_full_scale_shapes():
    hc = HeadConfig.paper()
    p = init_params(hc, 0)
    assert p["head.w1"].shape == (2048, 2048) and p["head.w2"].shape == (2048, 64)
    with no_grad():
        z = projection_forward(np.zeros((40, 2048), dtype=np.float32), p)
    assert z.shape == (40, 64)


def test_projection_head_matches_composition():
    hc = HeadConfig(16, 12, 8)
    p = init_params(hc, 3)
    for k in ("head.b1", "head.b2"):
        p[k].data[...] = np.random.default_rng(4).normal(size=p[k].shape)
    f = np.random.default_rng(5).normal(size=(5, 16))
    with precision(np.float64), no_grad():
        z = projection_forward(Tensor(f), p).data
    w1, b1, w2, b2 = (p[k].data.astype(np.float64) for k in ("head.w1", "head.b1", "head.w2", "head.b2"))
    np.testing.assert_allclose(z, np.maximum(f @ w1 + b1, 0) @ w2 + b2, atol=1e-6)


def test_projection_zero_params_give_zero():
    p = init_params(HeadConfig(16, 12, 8), 0)
    for t in p.tensors.values():
        t.data[...] = 0
    with no_grad():
        assert np.all(projection_forward(np.ones((2, 16)), p).data == 0)


def test_classifier_rows_sum_to_one_and_zero_weights_uniform():
    cc = ClassifierConfig(input_dim=16, widths=(8, 8, 8, 4))
    p = init_params(cc, 0)
    with no_grad():
        probs = classifier_forward(np.random.default_rng(0).normal(size=(6, 16)), p, cc).data
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)
    for t in p.tensors.values():
        t.data[...] = 0
    with no_grad():
        np.testing.assert_allclose(classifier_forward(np.ones((3, 16)), p, cc).data, 0.5)


def test_classifier_ladder_and_mismatch():
    cc = ClassifierConfig.paper()
    p = init_params(cc, 0)
    shapes = [p[f"cls.fc{i}.weight"].shape for i in range(1, 5)] + [p["cls.out.weight"].shape]
    assert shapes == [(2048, 2048), (2048, 4096), (4096, 2048), (2048, 256), (256, 2)]
    with pytest.raises(ValueError, match="expects"):
        classifier_logits(np.zeros((2, 100)), p, cc)


def test_classifier_applies_stored_standardization():
    cc = ClassifierConfig(input_dim=4, widths=(4, 4, 4, 4))
    p = init_params(cc, 0)
    x = np.random.default_rng(1).normal(size=(3, 4)).astype(np.float32)
    with no_grad():
        plain = classifier_logits(x, p, cc).data
    p.tensors["cls.norm.mean"] = Tensor(np.full(4, 2.0, dtype=np.float32))
    p.tensors["cls.norm.std"] = Tensor(np.full(4, 0.5, dtype=np.float32))
    with no_grad():
        shifted = classifier_logits(x * 0.5 + 2.0, p, cc).data
    np.testing.assert_allclose(shifted, plain, atol=1e-5)
    assert len(p.parameters()) == 10  # buffers are not trainable


def test_init_is_deterministic_and_bounded():
    cfg = EncoderConfig()
    a, b, c = init_params(cfg, 5), init_params(cfg, 5), init_params(cfg, 6)
    for k in a:
        np.testing.assert_array_equal(a[k].data, b[k].data)
    assert any(not np.array_equal(a[k].data, c[k].data) for k in a)
    w = a["enc.block1.pw"].data
    assert np.abs(w).max() <= np.sqrt(6 / 32)
    assert np.all(a["enc.stem.bn.gamma"].data == 1) and np.all(a["enc.stem.bn.beta"].data == 0)
    cc = ClassifierConfig()
    p = init_params(cc, 0)
    assert np.all(p["cls.fc1.bias"].data == 0)
    assert np.abs(p["cls.fc1.weight"].data).max() <= np.sqrt(6 / 128)
