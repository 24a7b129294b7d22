"""
The noise function F and the low-resolution augmentation used for training.

All randomness comes from an explicit numpy Generator; nothing here touches
global random state.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from mope import ops
from mope.settings import LOWRES_FACTORS, MAX_SIGMA, SEED

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DistortionConfig:
    max_sigma: float = MAX_SIGMA
    lowres_factors: Tuple[int, ...] = LOWRES_FACTORS
    seed: int = SEED

    def __post_init__(self):
        if not 0 < self.max_sigma <= 1:
            raise ValueError(f"max_sigma must lie in (0, 1], got {self.max_sigma}")
        if any(factor < 2 for factor in self.lowres_factors):
            raise ValueError(f"low-resolution factors must be >= 2, got {self.lowres_factors}")


@dataclass
class TrainingPair:
    base: np.ndarray
    noisy: np.ndarray
    sigma: float
    factor: int  # 1 when the base is the clean image itself


def gaussian_noise(shape, sigma, rng, dtype=np.float32):
    """Zero-mean i.i.d. Gaussian noise, drawn independently per pixel and channel."""
    return (rng.standard_normal(shape) * sigma).astype(dtype)


def add_gaussian_noise(x, sigma, rng):
    """y = clip(x + n, 0, 1); sigma = 0 returns x unchanged."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return x.copy()
    return np.clip(x + gaussian_noise(x.shape, sigma, rng, x.dtype), 0.0, 1.0)


def lowres_roundtrip(x, factor):
    """Bilinear downsample by `factor` then bilinear upsample back to the input size."""
    h, w = x.shape[2:]
    if factor < 1 or h % factor or w % factor:
        raise ValueError(f"low-resolution factor {factor} must divide the image size {h}x{w}")
    if factor == 1:
        return x.copy()
    small = ops.resize(x, h // factor, w // factor, "bilinear")
    return np.clip(ops.resize(small, h, w, "bilinear"), 0.0, 1.0)


def sample_training_pair(clean, cfg, rng):
    """Pick clean or a low-resolution round trip uniformly, then add noise with sigma ~ U[0, max_sigma]."""
    choices = (1,) + tuple(cfg.lowres_factors)
    factor = choices[int(rng.integers(len(choices)))]
    base = clean if factor == 1 else lowres_roundtrip(clean, factor)
    sigma = float(rng.uniform(0.0, cfg.max_sigma))
    return TrainingPair(base, add_gaussian_noise(base, sigma, rng), sigma, factor)


def sample_training_batch(clean, cfg, rng):
    """Per-image `sample_training_pair` over a batch; returns (bases, noisy, sigmas)."""
    pairs = [sample_training_pair(clean[i:i + 1], cfg, rng) for i in range(clean.shape[0])]
    if not pairs:
        return clean.copy(), clean.copy(), np.zeros(0)
    bases = np.concatenate([p.base for p in pairs])
    noisy = np.concatenate([p.noisy for p in pairs])
    return bases, noisy, np.array([p.sigma for p in pairs])


def pair_stream(images, cfg, batch_size, rng):
    """Endless stream of (base, noisy) batches drawn with replacement from `images`."""
    while True:
        picks = rng.integers(0, images.shape[0], size=batch_size)
        bases, noisy, _ = sample_training_batch(images[picks], cfg, rng)
        yield bases, noisy


def distort(images, sigma=0.0, factor=1, rng=None):
    """Deterministic evaluation distortion: optional low-resolution round trip, then fixed-sigma noise."""
    out = lowres_roundtrip(images, factor) if factor > 1 else images.copy()
    if sigma > 0:
        out = add_gaussian_noise(out, sigma, rng)
    return out
