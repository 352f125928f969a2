"""Smoke tests for the python bindings."""

import json
import math

import numpy as np
import pytest

import grlb


@pytest.fixture(scope="module")
def pair():
    return grlb.generate_pair(seed=3, size=32)


def test_generate_pair_shapes_and_invariants(pair):
    assert pair["i_minus"].shape == (32, 32, 3)
    assert pair["x_minus"].shape == (32, 32)
    assert pair["mask"].dtype == bool
    assert pair["mask"].any()
    outside = ~pair["mask"]
    np.testing.assert_array_equal(
        pair["x_minus"][outside], pair["x_plus"][outside]
    )
    untouched = outside & ~pair["artifact_mask"]
    np.testing.assert_array_equal(
        pair["i_minus"][untouched], pair["i_plus"][untouched]
    )
    assert not (pair["mask"] & pair["artifact_mask"]).any()


def test_flow_loss_and_reward(pair):
    x_minus, x_plus = pair["x_minus"], pair["x_plus"]
    assert grlb.flow_loss(x_minus, x_minus) == 0.0
    loss = grlb.flow_loss(x_minus, x_plus)
    assert loss > 0.0
    assert grlb.reward(x_minus, x_plus) == -loss
    vert, horiz = grlb.depth_flow(x_minus)
    assert vert.shape == (31, 32)
    assert horiz.shape == (32, 31)
    assert (vert >= 0).all() and (horiz >= 0).all()


def test_bt_loss_calibration(pair):
    x = pair["x_plus"]
    assert grlb.bt_loss(pair["x_minus"], x, x) == pytest.approx(math.log(2), abs=1e-6)


def test_mask_align_and_fill_in(pair):
    pred = np.zeros_like(pair["x_minus"])
    out = grlb.mask_align_replace(pred, pair["x_minus"], pair["mask"])
    np.testing.assert_array_equal(out[~pair["mask"]], pair["x_minus"][~pair["mask"]])
    assert (out[pair["mask"]] == 0).all()

    filled = grlb.local_max_fill_in(pair["x_minus"], pair["mask"])
    assert (filled[pair["mask"]] >= pair["x_minus"][pair["mask"]]).all()
    np.testing.assert_array_equal(filled[~pair["mask"]], pair["x_minus"][~pair["mask"]])

    assert grlb.masked_mae(pair["x_minus"], pair["x_minus"], pair["mask"]) == 0.0


def test_metrics(pair):
    a = pair["i_minus"]
    assert math.isinf(grlb.psnr(a, a))
    assert grlb.ssim(a, a) == pytest.approx(1.0)
    assert grlb.residue_iou(a, a, np.zeros((32, 32), dtype=bool)) == 1.0
    assert grlb.psnr(a, pair["i_plus"]) == pytest.approx(grlb.psnr(pair["i_plus"], a))


def test_colorize_roundtrip(pair):
    img = grlb.colorize_depth(pair["x_minus"])
    np.testing.assert_array_equal(img[:, :, 0], pair["x_minus"])
    np.testing.assert_array_equal(img[:, :, 0], img[:, :, 2])


def test_end_to_end_tiny_training(tmp_path):
    manifest = grlb.gen_dataset(
        str(tmp_path / "data"), seed=5, config_json=json.dumps({"count": 6, "height": 32, "width": 32})
    )
    cfg = json.dumps(
        {"steps": 4, "batch": 2, "widths": [8, 8, 8], "seed": 1, "log_every": 2,
         "checkpoint_every": 10, "schedule_t": 50}
    )
    ck1 = grlb.train_stage1(manifest, str(tmp_path / "s1"), config_json=cfg)
    ck2 = grlb.train_stage2(manifest, str(tmp_path / "s2"), config_json=cfg)

    sample = grlb.generate_pair(seed=5, size=32)
    edited = grlb.remove_geometry(ck1, sample["x_minus"], sample["mask"], steps=5, seed=1)
    outside = ~sample["mask"]
    np.testing.assert_array_equal(edited[outside], sample["x_minus"][outside])

    result = grlb.remove(ck1, ck2, sample["i_minus"], sample["x_minus"], sample["mask"],
                         steps=5, seed=1)
    assert result["output"].shape == (32, 32, 3)
    assert (result["output"] >= 0).all() and (result["output"] <= 1).all()

    again = grlb.remove(ck1, ck2, sample["i_minus"], sample["x_minus"], sample["mask"],
                        steps=5, seed=1)
    np.testing.assert_array_equal(result["output"], again["output"])
