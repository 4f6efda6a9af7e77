import numpy as np
import pytest
import torch

from wstyle.backbone import (
    BackboneLoadError,
    ImageShapeError,
    LayerNameError,
    STYLE_LAYERS,
    _LAYER_TO_BN_INDEX,
    extract_features,
    load_backbone,
    raw_pixel_features,
    save_random_weights,
)

from oracles import shape_walk


def rand_image(h, w, seed=0):
    return torch.rand(h, w, 3, generator=torch.Generator().manual_seed(seed))


class TestLoad:
    def test_valid_file_resolves_all_style_layers(self, backbone):
        feats = extract_features(backbone, rand_image(64, 64), list(STYLE_LAYERS))
        assert set(feats) == set(STYLE_LAYERS)

    def test_missing_file(self, tmp_path):
        with pytest.raises(BackboneLoadError, match="not found"):
            load_backbone(tmp_path / "nope.pth")

    def test_truncated_state_dict(self, tmp_path, weights_path):
        state = torch.load(weights_path, weights_only=True)
        truncated = {k: v for k, v in list(state.items())[: len(state) // 2]}
        bad = tmp_path / "truncated.pth"
        torch.save(truncated, bad)
        with pytest.raises(BackboneLoadError, match="vgg19_bn"):
            load_backbone(bad)

    def test_corrupt_bytes(self, tmp_path):
        bad = tmp_path / "garbage.pth"
        bad.write_bytes(b"not a checkpoint")
        with pytest.raises(BackboneLoadError):
            load_backbone(bad)

    def test_wrong_shapes(self, tmp_path, weights_path):
        state = torch.load(weights_path, weights_only=True)
        state["features.0.weight"] = torch.zeros(8, 3, 3, 3)
        bad = tmp_path / "badshape.pth"
        torch.save(state, bad)
        with pytest.raises(BackboneLoadError, match="shape"):
            load_backbone(bad)

    def test_load_twice_bit_identical_features(self, weights_path):
        img = rand_image(64, 64, seed=3)
        a = load_backbone(weights_path)
        b = load_backbone(weights_path)
        fa = extract_features(a, img, ["conv3_1"])["conv3_1"].values
        fb = extract_features(b, img, ["conv3_1"])["conv3_1"].values
        assert torch.equal(fa, fb)

    def test_weights_immutable(self, backbone):
        assert all(not p.requires_grad for p in backbone._stages.parameters())


class TestExtract:
    def test_frozen_shapes_64(self, backbone):
        feats = extract_features(backbone, rand_image(64, 64), ["conv1_1", "conv3_1"])
        assert feats["conv1_1"].shape == (64, 4096)
        assert feats["conv3_1"].shape == (256, 256)

    @pytest.mark.parametrize("side", [64, 96])
    def test_shape_law_matches_shape_walk(self, backbone, side):
        walked = shape_walk(backbone._stages, side, side)
        feats = extract_features(backbone, rand_image(side, side), list(STYLE_LAYERS))
        for name in STYLE_LAYERS:
            assert feats[name].shape == walked[_LAYER_TO_BN_INDEX[name]]

    def test_deterministic(self, backbone):
        img = rand_image(64, 64, seed=5)
        a = extract_features(backbone, img, ["conv2_1"])["conv2_1"].values
        b = extract_features(backbone, img, ["conv2_1"])["conv2_1"].values
        assert torch.equal(a, b)

    def test_unknown_layer_rejected(self, backbone):
        with pytest.raises(LayerNameError, match="conv1_1"):
            extract_features(backbone, rand_image(64, 64), ["relu4_2"])

    def test_small_image_rejected(self, backbone):
        with pytest.raises(ImageShapeError):
            extract_features(backbone, rand_image(16, 16), ["conv1_1"])

    def test_out_of_range_pixels_rejected(self, backbone):
        img = rand_image(64, 64) + 2.0
        with pytest.raises(ImageShapeError):
            extract_features(backbone, img, ["conv1_1"])

    def test_gradients_flow_to_image(self, backbone):
        img = rand_image(64, 64, seed=6).requires_grad_(True)
        feats = extract_features(backbone, img, ["conv1_1"])
        feats["conv1_1"].values.sum().backward()
        assert img.grad is not None
        assert float(img.grad.abs().sum()) > 0

    def test_receptive_field_locality_conv1_1(self, backbone):
        # conv1_1 sees a 3x3 window: a one-pixel bump must change features
        # inside that neighborhood and nowhere else
        img = rand_image(64, 64, seed=7)
        bumped = img.clone()
        bumped[32, 32] = (bumped[32, 32] + 0.3).clamp(0, 1)
        a = extract_features(backbone, img, ["conv1_1"])["conv1_1"].values
        b = extract_features(backbone, bumped, ["conv1_1"])["conv1_1"].values
        diff = (a - b).abs().reshape(64, 64, 64).sum(dim=0)  # spatial map
        changed = torch.nonzero(diff > 1e-7)
        assert len(changed) > 0
        assert (changed[:, 0] - 32).abs().max() <= 1
        assert (changed[:, 1] - 32).abs().max() <= 1


class TestRawPixels:
    def test_2x2_reshape(self):
        img = torch.rand(2, 2, 3, generator=torch.Generator().manual_seed(0))
        fm = raw_pixel_features(img)
        assert fm.shape == (3, 4)
        assert fm.layer_name == "raw_pixels"

    def test_constant_gray(self):
        img = torch.full((4, 4, 3), 0.5)
        fm = raw_pixel_features(img)
        assert torch.equal(fm.values, torch.full((3, 16), 0.5))

    def test_round_trip(self):
        img = torch.rand(5, 7, 3, generator=torch.Generator().manual_seed(1))
        fm = raw_pixel_features(img)
        back = fm.values.T.reshape(5, 7, 3)
        assert torch.equal(back, img)


def test_random_checkpoint_is_deterministic(tmp_path):
    a, b = tmp_path / "a.pth", tmp_path / "b.pth"
    save_random_weights(a, seed=3)
    save_random_weights(b, seed=3)
    sa = torch.load(a, weights_only=True)
    sb = torch.load(b, weights_only=True)
    assert set(sa) == set(sb)
    assert all(torch.equal(sa[k], sb[k]) for k in sa)
