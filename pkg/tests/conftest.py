import numpy as np
import pytest
import torch

from wstyle.backbone import load_backbone, save_random_weights

FIXTURES = __import__("pathlib").Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def weights_path(tmp_path_factory):
    """Seeded random-weight VGG19-BN checkpoint in the standard layout.

    Stands in for the pretrained ImageNet checkpoint, which cannot be
    downloaded in this environment; every tested property (shapes,
    determinism, differentiability, optimization behavior) is weight-value
    agnostic.
    """
    path = tmp_path_factory.mktemp("weights") / "vgg19_bn.pth"
    save_random_weights(path, seed=3)
    return path


@pytest.fixture(scope="session")
def backbone(weights_path):
    return load_backbone(weights_path)


def _load_png(path):
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0


@pytest.fixture(scope="session")
def style_image():
    return _load_png(FIXTURES / "style.png")


@pytest.fixture(scope="session")
def content_image():
    return _load_png(FIXTURES / "content.png")


@pytest.fixture(autouse=True)
def _torch_seed():
    torch.manual_seed(0)
