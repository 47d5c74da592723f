"""Shared fixtures: a tiny synthetic task, a briefly trained frozen backbone and its aux blocks."""

import numpy as np
import pytest

from src.data import gen_synthetic, split_dataset
from src.detectors import UcanSource, dknn_build
from src.model import BackboneModel, smallcnn_spec, train_backbone
from src.ucan import ArcFaceConfig, build_aux_blocks, train_aux

TINY_CLASSES = 4
TINY_IMAGE = 8


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_dataset():
    """4 classes x 12 images of shape (3, 8, 8), class-major."""
    return gen_synthetic(TINY_CLASSES, 12, image_size=TINY_IMAGE, separation=1.5, seed=7)


@pytest.fixture(scope="session")
def tiny_splits(tiny_dataset):
    return split_dataset(tiny_dataset, (0.5, 0.15, 0.2, 0.15), seed=7)


@pytest.fixture(scope="session")
def tiny_model(tiny_splits):
    """SmallCNN with widths (4, 8): taps L1 conv, L2 conv, L3 pool; trained a few epochs, frozen."""
    spec = smallcnn_spec((3, TINY_IMAGE, TINY_IMAGE), TINY_CLASSES, widths=(4, 8))
    model = BackboneModel.initialize(spec, seed=3)
    train_backbone(model, tiny_splits["train"], epochs=4, seed=3, lr=0.05, batch_size=8)
    return model.freeze()


@pytest.fixture(scope="session")
def tiny_blocks(tiny_model, tiny_splits):
    config = ArcFaceConfig(num_classes=TINY_CLASSES, scale=16.0, margin=0.3, d_prime=4)
    blocks = build_aux_blocks(tiny_model.spec.tap_channels(), config, seed=5)
    train_aux(tiny_model, blocks, tiny_splits["train"], epochs=3, seed=5, batch_size=8)
    return blocks


@pytest.fixture
def out_dir(tmp_path):
    path = tmp_path / "out"
    path.mkdir()
    return path


@pytest.fixture(scope="session")
def tiny_dknn(tiny_model, tiny_blocks, tiny_splits):
    """Refined-embedding DKNN over layers 2 and 3 of the tiny backbone."""
    source = UcanSource(tiny_blocks, [2, 3])
    train, calib = tiny_splits["train"], tiny_splits["calib"]
    _, train_features = source.extract(tiny_model, train.samples)
    _, calib_features = source.extract(tiny_model, calib.samples)
    return dknn_build(train_features, train.labels, calib_features, calib.labels, k=3,
                      num_classes=TINY_CLASSES, source=source)
