import dataclasses

import numpy as np
import pytest

from ucl.augment import AugmentationPolicy
from ucl.autodiff import Tensor, backward
from ucl.autodiff import reduce_sum
from ucl.checkpoint import Checkpoint, to_bytes
from ucl.data import DomainSpec, generate_synthetic_domain
from ucl.model import ClassifierConfig, EncoderConfig, HeadConfig
from ucl.training import (
    Sgd,
    SgdConfig,
    TrainReport,
    extract_features,
    predict_fake_proba,
    pretrain,
    step_lr,
    train_probe,
    view_batch,
)

TINY = EncoderConfig(input_size=16, stem_channels=4, widths=(8, 16), feature_dim=16)
TINY_HEAD = HeadConfig(16, 16, 8)
TINY_POLICY = AugmentationPolicy(output_size=16)


def tiny_domain(n=8, seed=0):
    return generate_synthetic_domain(DomainSpec("t", "color_shift", 0.3, n, n, seed=seed, image_size=16))


def blobs(n=200, seed=0):
    r = np.random.default_rng(seed)
    x = np.r_[r.normal(-2.0, 1.0, size=(n, 2)), r.normal(2.0, 1.0, size=(n, 2))].astype(np.float32)
    return x, np.r_[np.zeros(n, np.int64), np.ones(n, np.int64)]


def test_step_lr_pretrain_schedule():
    assert step_lr(5e-4, 6, 0.5, 5) == 5e-4
    assert step_lr(5e-4, 6, 0.5, 6) == 2.5e-4
    assert step_lr(5e-4, 6, 0.5, 12) == 1.25e-4


def test_step_lr_probe_schedule():
    assert step_lr(0.3, 400, 0.8, 399) == 0.3
    assert step_lr(0.3, 400, 0.8, 400) == pytest.approx(0.06, rel=1e-12)


def test_step_lr_zero_rate_is_constant():
    assert all(step_lr(0.1, 3, 0.0, e) == 0.1 for e in range(20))


def test_sgd_config_validation():
    with pytest.raises(ValueError, match="descending_rate"):
        SgdConfig(descending_rate=1.0)
    with pytest.raises(ValueError, match="non-negative"):
        SgdConfig(lr=-1)


def test_sgd_step_is_exact():
    w = Tensor(np.array([1.0, -2.0], dtype=np.float32), requires_grad=True)
    backward(reduce_sum(w * w))
    Sgd([w]).step(0.25)
    np.testing.assert_array_equal(w.data, np.array([1.0, -2.0], np.float32) - np.float32(0.25) * np.array([2.0, -4.0],
                                                                                                         np.float32))


def test_view_batch_layout():
    imgs = [s.pixels for s in tiny_domain(2)]
    x = view_batch(imgs, [0, 3], TINY_POLICY, seed=1, offset=0)
    assert x.shape == (4, 3, 16, 16) and x.dtype == np.float32
    assert not np.array_equal(x[0], x[1])


def test_pretrain_lr_zero_leaves_parameters_unchanged():
    data = tiny_domain(1)
    sgd = SgdConfig(lr=0.0, batch_size=2, epochs=1)
    params, report = pretrain(data, TINY_POLICY, TINY, sgd, seed=0, head_config=TINY_HEAD)
    from ucl.model import init_params

    ref = init_params(TINY, 0).merged(init_params(TINY_HEAD, 1))
    for k in ref:
        np.testing.assert_array_equal(params[k].data, ref[k].data)
    assert len(report.losses) == 1


def test_pretrain_is_label_blind():
    data = tiny_domain(6)
    flipped = [dataclasses.replace(s, label="real" if s.label == "fake" else "fake") for s in data]
    sgd = SgdConfig(lr=0.05, batch_size=4, epochs=2)
    a, _ = pretrain(data, TINY_POLICY, TINY, sgd, 3, TINY_HEAD)
    b, _ = pretrain(flipped, TINY_POLICY, TINY, sgd, 3, TINY_HEAD)
    assert to_bytes(Checkpoint(a, "encoder")) == to_bytes(Checkpoint(b, "encoder"))


def test_pretrain_errors():
    with pytest.raises(ValueError, match="non-empty"):
        pretrain([], TINY_POLICY, TINY, SgdConfig(batch_size=2), 0, TINY_HEAD)
    with pytest.raises(ValueError, match=">= 2"):
        pretrain(tiny_domain(2), TINY_POLICY, TINY, SgdConfig(batch_size=1), 0, TINY_HEAD)
    with pytest.raises(ValueError, match="temperature"):
        pretrain(tiny_domain(2), TINY_POLICY, TINY, SgdConfig(batch_size=2), 0, TINY_HEAD, tau=0.0)


def test_pretrain_loss_decreases():
    data = tiny_domain(24, seed=2)
    sgd = SgdConfig(lr=0.05, step_size=6, descending_rate=0.5, batch_size=8, epochs=8)
    _, report = pretrain(data, TINY_POLICY, TINY, sgd, 0, TINY_HEAD)
    assert len(report.losses) == len(report.lrs) == 8
    assert np.mean(report.losses[-3:]) < np.mean(report.losses[:3])
    assert report.lrs[5] == 0.05 and report.lrs[6] == 0.025


def test_extract_features_deterministic_and_sources():
    data = tiny_domain(4)
    params, _ = pretrain(data, TINY_POLICY, TINY, SgdConfig(lr=0.05, batch_size=4, epochs=1), 0, TINY_HEAD)
    f1, y = extract_features(params, TINY, data)
    f2, _ = extract_features(params, TINY, data)
    np.testing.assert_array_equal(f1, f2)
    assert f1.shape == (8, 16) and list(y) == [s.target for s in data]
    z, _ = extract_features(params, TINY, data, "projection_head")
    assert z.shape == (8, 8)
    with pytest.raises(ValueError, match="feature source"):
        extract_features(params, TINY, data, "pixels")


def test_probe_separates_blobs():
    x, y = blobs()
    cc = ClassifierConfig(input_dim=2, widths=(8, 8, 8, 4))
    sgd = SgdConfig(lr=0.05, step_size=400, descending_rate=0.8, batch_size=400, epochs=200)
    params, report = train_probe(x, y, cc, sgd, seed=0)
    acc = np.mean((predict_fake_proba(x, params, cc) > 0.5) == y)
    assert acc >= 0.99
    drops = np.diff(report.losses) <= 0
    assert drops.mean() >= 0.8


def test_probe_lr_zero_and_missing_class():
    x, y = blobs(20)
    cc = ClassifierConfig(input_dim=2, widths=(4, 4, 4, 4))
    from ucl.model import init_params

    params, _ = train_probe(x, y, cc, SgdConfig(lr=0.0, batch_size=16, epochs=3), seed=1, standardize=False)
    ref = init_params(cc, 1)
    for k in ref:
        np.testing.assert_array_equal(params[k].data, ref[k].data)
    with pytest.raises(ValueError, match="absent"):
        train_probe(x, np.zeros_like(y), cc, SgdConfig(batch_size=16, epochs=1), seed=0)


def test_probe_standardization_is_frozen():
    x, y = blobs(20)
    x = x * 10 + 5
    cc = ClassifierConfig(input_dim=2, widths=(4, 4, 4, 4))
    params, _ = train_probe(x, y, cc, SgdConfig(lr=0.05, batch_size=16, epochs=5), seed=0)
    np.testing.assert_allclose(params["cls.norm.mean"].data, x.mean(axis=0), rtol=1e-5)
    assert not params["cls.norm.mean"].requires_grad


def test_report_csv():
    r = TrainReport([1.5, 1.0], [0.1, 0.05])
    assert r.to_csv().splitlines() == ["epoch,loss,lr", "0,1.5,0.1", "1,1.0,0.05"]
