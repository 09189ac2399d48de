import numpy as np
import pytest

import metadet as md


@pytest.fixture(scope="module")
def det_cfg():
    cfg = md.DetectorConfig()
    cfg.input_size = 32
    cfg.stride = 8
    cfg.anchor_size = 12
    cfg.trunk_channels = [3, 4, 4, 4]
    return cfg


@pytest.fixture(scope="module")
def synth_cfg():
    cfg = md.SynthConfig()
    cfg.canvas_size = 64
    cfg.sequence_length = 5
    cfg.min_object_size = 10
    cfg.max_object_size = 18
    cfg.seed = 3
    return cfg


def test_iou():
    a = md.BoundingBox(10, 10, 4, 4)
    assert md.iou(a, a) == 1.0
    b = md.BoundingBox(100, 100, 4, 4)
    assert md.iou(a, b) == 0.0


def test_generate_sequence(synth_cfg):
    frames, gt = md.generate_sequence(synth_cfg, 0)
    assert len(frames) == 5 and len(gt) == 5
    assert frames[0].shape == (3, 64, 64)
    assert 0.0 <= frames[0].min() and frames[0].max() <= 1.0
    assert gt[0].w > 0 and gt[0].h > 0


def test_params_and_detect(det_cfg):
    params = md.init_detector_params(det_cfg, 1e-3, 1)
    names = params.names()
    assert any(n.startswith("trunk.") for n in names)
    w = params.weight("cls_head.0.weight")
    assert w.ndim == 4
    image = np.random.default_rng(0).random((3, 32, 32))
    dets = md.detect(image, params, det_cfg)
    assert len(dets) == det_cfg.grid() ** 2
    for box, score in dets:
        assert 0.0 <= score <= 1.0


def test_adapt_reduces_nothing_breaks(det_cfg, synth_cfg):
    frames, gt = md.generate_sequence(synth_cfg, 1)
    params = md.init_detector_params(det_cfg, 1e-2, 2)
    support = md.make_support_set(frames[0], gt[0], det_cfg.input_size)
    assert len(support) == 3
    adapted = md.adapt(params, support, det_cfg, 2)
    before = params.weight("cls_head.1.weight")
    after = adapted.weight("cls_head.1.weight")
    assert before.shape == after.shape
    assert not np.array_equal(before, after)


def test_run_tracker_and_evaluate(det_cfg, synth_cfg):
    frames, gt = md.generate_sequence(synth_cfg, 2)
    params = md.init_detector_params(det_cfg, 1e-3, 4)
    tcfg = md.TrackerConfig()
    tcfg.adapt_steps = 1
    results = md.run_tracker(frames, gt[0], params, det_cfg, tcfg)
    assert len(results) == len(frames)
    assert results[0][0].cx == gt[0].cx
    report = md.evaluate([r[0] for r in results], gt)
    assert 0.0 <= report["auc"] <= 1.0
    assert len(report["success"]) == 101


def test_checkpoint_roundtrip(det_cfg, tmp_path):
    params = md.init_detector_params(det_cfg, 1e-3, 5)
    path = str(tmp_path / "ck.ckpt")
    md.save_checkpoint(path, det_cfg, params)
    cfg2, params2 = md.load_checkpoint(path)
    assert cfg2.input_size == det_cfg.input_size
    for n in params.names():
        assert np.array_equal(params.weight(n), params2.weight(n))


def test_peak_to_sidelobe():
    m = np.zeros((20, 20))
    m[7, 7] = 1.0
    assert md.peak_to_sidelobe(m) > 0.7
    assert md.peak_to_sidelobe(np.full((20, 20), 0.5)) == 0.0
