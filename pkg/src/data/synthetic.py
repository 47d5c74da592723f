"""
Seeded synthetic datasets.

Image recipe (``gen_synthetic``), per class c of CL:
    - a Gaussian blob centred on a circle at angle 2*pi*c/CL, radius 0.25,
      with a class colour tint across channels
    - a sinusoidal grating with class orientation pi*c/CL and frequency 2 + c mod 3
    - per sample: blob centre jitter, blob width, grating phase and pixel noise
The class signal is scaled by ``separation`` around mid-grey, noise is fixed
(sigma 0.08), and pixels are clipped to [0, 1].

``gen_blobs`` gives 1-D Gaussian clusters for the MLP backbone.
"""

import numpy as np

from src.data.dataset import LabeledDataset
from src.exceptions import ConfigError
from src.logger import get_logger

logger = get_logger(__name__)

NOISE_SIGMA = 0.08
BLOB_RADIUS = 0.25
BLOB_WIDTH = 0.15


def _validate(classes: int, per_class: int, separation: float) -> None:
    if classes < 2:
        raise ConfigError(f"classes must be at least 2, got {classes}", details={"classes": classes})
    if per_class < 1:
        raise ConfigError(f"per_class must be at least 1, got {per_class}", details={"per_class": per_class})
    if not separation > 0:
        raise ConfigError(f"separation must be positive, got {separation}")


def gen_synthetic(classes: int, per_class: int, image_size: int = 16, separation: float = 1.0,
                  seed: int = 0, channels: int = 3) -> LabeledDataset:
    """Class-conditional structured images of shape (channels, image_size, image_size)."""
    _validate(classes, per_class, separation)
    if image_size < 4:
        raise ConfigError(f"image_size must be at least 4, got {image_size}")
    if channels < 1:
        raise ConfigError(f"channels must be at least 1, got {channels}")

    rng = np.random.default_rng(seed)
    grid = np.linspace(0.0, 1.0, image_size)
    yy, xx = np.meshgrid(grid, grid, indexing="ij")
    tints = rng.uniform(0.2, 1.0, size=(classes, channels))

    samples = np.empty((classes * per_class, channels, image_size, image_size))
    labels = np.repeat(np.arange(classes), per_class)
    for c in range(classes):
        angle = 2.0 * np.pi * c / classes
        centre = 0.5 + BLOB_RADIUS * np.array([np.sin(angle), np.cos(angle)])
        orientation = np.pi * c / classes
        frequency = 2.0 + (c % 3)

        jitter = rng.normal(0.0, 0.05, size=(per_class, 2))
        widths = BLOB_WIDTH * rng.uniform(0.8, 1.2, size=per_class)
        phases = rng.uniform(0.0, 2.0 * np.pi, size=per_class)
        noise = rng.normal(0.0, NOISE_SIGMA, size=(per_class, channels, image_size, image_size))

        cy = (centre[0] + jitter[:, 0])[:, None, None]
        cx = (centre[1] + jitter[:, 1])[:, None, None]
        blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * widths[:, None, None] ** 2))
        wave = xx * np.cos(orientation) + yy * np.sin(orientation)
        texture = 0.5 * (1.0 + np.sin(2.0 * np.pi * frequency * wave[None] + phases[:, None, None]))

        signal = 0.7 * blob[:, None] * tints[c][None, :, None, None] + 0.3 * texture[:, None]
        image = 0.5 + separation * (signal - 0.35) + noise
        samples[c * per_class:(c + 1) * per_class] = np.clip(image, 0.0, 1.0)

    logger.info("Generated synthetic images: %d classes x %d, %dx%dx%d, separation=%s", classes, per_class,
                channels, image_size, image_size, separation)
    return LabeledDataset(samples=samples, labels=labels, num_classes=classes)


def gen_blobs(classes: int, per_class: int, dim: int = 8, separation: float = 1.0,
              seed: int = 0) -> LabeledDataset:
    """Gaussian clusters in [0, 1]^dim with class means spread by ``separation``."""
    _validate(classes, per_class, separation)
    if dim < 2:
        raise ConfigError(f"dim must be at least 2, got {dim}")
    rng = np.random.default_rng(seed)
    means = 0.5 + 0.2 * separation * rng.standard_normal((classes, dim))
    samples = np.concatenate([
        means[c] + NOISE_SIGMA * rng.standard_normal((per_class, dim)) for c in range(classes)
    ])
    labels = np.repeat(np.arange(classes), per_class)
    return LabeledDataset(samples=np.clip(samples, 0.0, 1.0), labels=labels, num_classes=classes)
