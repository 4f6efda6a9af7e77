"""VGG19-BN feature extraction with features arranged as matrix columns.

The backbone is the convolutional stack of VGG19 with batch normalization,
loaded from a checkpoint in the standard torchvision state-dict layout
(keys ``features.<i>.<param>``; classifier keys are ignored). Extraction
taps the batch-norm output of the first conv in each block, so features are
zero-centered the way the pretrained normalization statistics left them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import torch
from torch import nn

# First-conv-of-block taps: name -> index of the BatchNorm following the conv.
STYLE_LAYERS = ("conv1_1", "conv2_1", "conv3_1", "conv4_1", "conv5_1")
_LAYER_TO_BN_INDEX = {
    "conv1_1": 1,
    "conv2_1": 8,
    "conv3_1": 15,
    "conv4_1": 28,
    "conv5_1": 41,
}

# VGG19 conv config ('E'): channel counts with 'M' marking 2x2 max pools.
_VGG19_CFG = [64, 64, "M", 128, 128, "M", 256, 256, 256, 256, "M",
              512, 512, 512, 512, "M", 512, 512, 512, 512, "M"]

# ImageNet preprocessing constants the pretrained weights expect.
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

MIN_IMAGE_SIDE = 32


class BackboneLoadError(RuntimeError):
    """Weights file is missing, unreadable, or not VGG19-BN shaped."""


class LayerNameError(ValueError):
    """Requested layer is not one of the canonical conv_k_1 names."""


class ImageShapeError(ValueError):
    """Image tensor fails the H x W x 3, [0, 1], minimum-size contract."""


@dataclass
class FeatureMatrix:
    """N x M feature matrix for one layer; columns are feature-map pixels."""

    values: torch.Tensor
    layer_name: str

    @property
    def shape(self):
        return tuple(self.values.shape)


def _make_vgg19_bn_features() -> nn.Sequential:
    layers: list[nn.Module] = []
    in_ch = 3
    for v in _VGG19_CFG:
        if v == "M":
            layers.append(nn.MaxPool2d(kernel_size=2, stride=2))
        else:
            layers.append(nn.Conv2d(in_ch, v, kernel_size=3, padding=1))
            layers.append(nn.BatchNorm2d(v))
            layers.append(nn.ReLU(inplace=False))
            in_ch = v
    return nn.Sequential(*layers)


class Backbone:
    """Immutable VGG19-BN convolutional stack up to conv5_1's batch norm."""

    def __init__(self, features: nn.Sequential):
        last = max(_LAYER_TO_BN_INDEX.values())
        self._stages = nn.Sequential(*list(features.children())[: last + 1])
        self._stages.eval()
        for p in self._stages.parameters():
            p.requires_grad_(False)
        self.mean = torch.tensor(IMAGENET_MEAN).view(3, 1, 1)
        self.std = torch.tensor(IMAGENET_STD).view(3, 1, 1)

    @property
    def style_layers(self):
        return STYLE_LAYERS


def load_backbone(weights_source) -> Backbone:
    """Load a VGG19-BN checkpoint (torchvision state-dict layout) from disk."""
    path = Path(weights_source)
    if not path.is_file():
        raise BackboneLoadError(f"weights file not found: {path}")
    try:
        state = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise BackboneLoadError(
            f"could not read {path} as a VGG19-BN checkpoint "
            f"(expected a torchvision-style state dict with 'features.<i>.*' keys): {exc}"
        ) from exc
    if not isinstance(state, dict):
        raise BackboneLoadError(f"{path} does not contain a state dict")
    features = _make_vgg19_bn_features()
    feature_state = {
        k[len("features."):]: v for k, v in state.items() if k.startswith("features.")
    }
    needed = {k: v for k, v in features.state_dict().items()}
    missing = sorted(set(needed) - set(feature_state))
    if missing:
        raise BackboneLoadError(
            f"{path} is not a complete VGG19-BN checkpoint; missing keys like "
            f"features.{missing[0]} (expected torchvision vgg19_bn layout)"
        )
    for k, expect in needed.items():
        got = feature_state[k]
        if tuple(got.shape) != tuple(expect.shape):
            raise BackboneLoadError(
                f"{path}: features.{k} has shape {tuple(got.shape)}, "
                f"expected {tuple(expect.shape)} (torchvision vgg19_bn layout)"
            )
    features.load_state_dict({k: feature_state[k] for k in needed})
    return Backbone(features)


def _validate_image(img, min_side: int = 1) -> torch.Tensor:
    t = torch.as_tensor(img)
    if t.ndim != 3 or t.shape[2] != 3:
        raise ImageShapeError(f"expected H x W x 3 image, got shape {tuple(t.shape)}")
    h, w = t.shape[0], t.shape[1]
    if h < min_side or w < min_side:
        raise ImageShapeError(f"image {h}x{w} is below the {min_side}px minimum side")
    vals = t.detach()
    if not torch.isfinite(vals).all():
        raise ImageShapeError("image contains non-finite pixels")
    if vals.min() < -1e-6 or vals.max() > 1.0 + 1e-6:
        raise ImageShapeError("pixel values must lie in [0, 1]")
    return t


def extract_features(backbone: Backbone, img, layers) -> dict[str, FeatureMatrix]:
    """Run the backbone on one image and tap the requested layers.

    Differentiable with respect to `img`. Each output is the N_l x M_l
    matrix of channel activations, one column per spatial position.
    """
    for name in layers:
        if name not in _LAYER_TO_BN_INDEX:
            raise LayerNameError(
                f"unknown layer {name!r}; canonical layers are {', '.join(STYLE_LAYERS)}"
            )
    t = _validate_image(img, min_side=MIN_IMAGE_SIDE)
    x = t.permute(2, 0, 1).to(torch.float32)
    x = (x - backbone.mean) / backbone.std
    x = x.unsqueeze(0)
    wanted = {_LAYER_TO_BN_INDEX[name]: name for name in layers}
    max_idx = max(wanted) if wanted else -1
    out: dict[str, FeatureMatrix] = {}
    for i, module in enumerate(backbone._stages):
        x = module(x)
        if x.shape[2] < 1 or x.shape[3] < 1:
            raise ImageShapeError(f"image too small: empty feature map at stage {i}")
        if i in wanted:
            name = wanted[i]
            n_l = x.shape[1]
            out[name] = FeatureMatrix(x.reshape(1, n_l, -1).squeeze(0), name)
        if i == max_idx:
            break
    return out


def raw_pixel_features(img) -> FeatureMatrix:
    """View an image's pixels as a 3 x (H*W) feature matrix (columns = pixels)."""
    t = _validate_image(img)
    return FeatureMatrix(t.reshape(-1, 3).T, "raw_pixels")


def expected_feature_shape(layer_name: str, height: int, width: int) -> tuple[int, int]:
    """(N_l, M_l) implied by the architecture for a given input size."""
    if layer_name not in _LAYER_TO_BN_INDEX:
        raise LayerNameError(f"unknown layer {layer_name!r}")
    k = int(layer_name[4])
    channels = {1: 64, 2: 128, 3: 256, 4: 512, 5: 512}[k]
    h, w = height, width
    for _ in range(k - 1):
        h, w = h // 2, w // 2
    return channels, h * w


def save_random_weights(path, seed: int = 0) -> None:
    """Write a seeded random-weight checkpoint in the VGG19-BN layout.

    Substitute for the pretrained ImageNet checkpoint in offline settings:
    convs get Kaiming-normal weights and the batch-norm running statistics
    are calibrated on random images so activations stay unit-scale. Feature
    shapes, determinism, and optimization behavior all hold; only the
    semantic quality of the features differs from the pretrained ones.
    """
    gen = torch.Generator().manual_seed(seed)
    features = _make_vgg19_bn_features()
    with torch.no_grad():
        for module in features:
            if isinstance(module, nn.Conv2d):
                fan_in = module.in_channels * 9
                module.weight.copy_(
                    torch.randn(module.weight.shape, generator=gen)
                    * math.sqrt(2.0 / fan_in)
                )
                module.bias.zero_()
        # Populate running stats so post-BN features are roughly standardized.
        features.train()
        for m in features.modules():
            if isinstance(m, nn.BatchNorm2d):
                m.momentum = None  # cumulative averaging
        calib = torch.rand(4, 3, 64, 64, generator=gen)
        features(calib)
        features.eval()
    state = {f"features.{k}": v for k, v in features.state_dict().items()}
    torch.save(state, path)
