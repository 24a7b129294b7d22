from collections import Counter

import numpy as np
import numpy.testing as npt
import pytest

from mope import distortion
from mope.distortion import DistortionConfig


def test_zero_sigma_is_identity(images, rng):
    npt.assert_array_equal(distortion.add_gaussian_noise(images, 0.0, rng), images)


def test_noise_is_clipped(images, rng):
    noisy = distortion.add_gaussian_noise(images, 0.5, rng)
    assert noisy.min() >= 0 and noisy.max() <= 1
    assert noisy.dtype == images.dtype
    assert not np.array_equal(noisy, images)


def test_negative_sigma(images, rng):
    with pytest.raises(ValueError):
        distortion.add_gaussian_noise(images, -0.1, rng)


def test_noise_statistics(rng):
    # over a million samples; clipping at 0.5 +- 3.3 sigma barely moves the spread
    flat = np.full((1, 3, 578, 578), 0.5, np.float32)
    noise = (distortion.add_gaussian_noise(flat, 0.15, rng) - flat).astype(np.float64)
    assert noise.size >= 1_000_000
    assert abs(noise.mean()) < 0.001
    assert noise.std() == pytest.approx(0.15, rel=0.01)


def test_noise_is_reproducible(images):
    a = distortion.add_gaussian_noise(images, 0.1, np.random.default_rng(7))
    b = distortion.add_gaussian_noise(images, 0.1, np.random.default_rng(7))
    npt.assert_array_equal(a, b)


def test_lowres_roundtrip_of_constant_image():
    flat = np.full((2, 3, 16, 16), 0.25, np.float32)
    npt.assert_allclose(distortion.lowres_roundtrip(flat, 4), flat, atol=1e-6)


def test_lowres_roundtrip_of_checkerboard():
    board = np.indices((8, 8)).sum(axis=0) % 2
    x = np.broadcast_to(board, (1, 3, 8, 8)).astype(np.float32)
    npt.assert_allclose(distortion.lowres_roundtrip(x, 2), 0.5, atol=1e-6)


def test_lowres_roundtrip_loses_detail(images):
    out = distortion.lowres_roundtrip(images, 4)
    assert out.shape == images.shape
    assert not np.allclose(out, images)


def test_lowres_factor_must_divide(images):
    with pytest.raises(ValueError, match="divide"):
        distortion.lowres_roundtrip(images, 3)


def test_config_validation():
    with pytest.raises(ValueError):
        DistortionConfig(max_sigma=0.0)
    with pytest.raises(ValueError):
        DistortionConfig(lowres_factors=(1,))


def test_training_pair_sigma_range(images, rng):
    cfg = DistortionConfig(max_sigma=0.1, lowres_factors=(2, 4))
    factors = set()
    for _ in range(40):
        pair = distortion.sample_training_pair(images[:1], cfg, rng)
        assert 0 <= pair.sigma <= 0.1
        assert pair.noisy.shape == pair.base.shape == (1, 3, 16, 16)
        factors.add(pair.factor)
    assert factors == {1, 2, 4}


def test_training_pair_factor_frequencies(rng):
    image = np.full((1, 3, 8, 8), 0.5, np.float32)
    cfg = DistortionConfig(lowres_factors=(2, 4))
    draws = [distortion.sample_training_pair(image, cfg, rng).factor for _ in range(10_000)]
    counts = Counter(draws)
    assert set(counts) == {1, 2, 4}
    for factor in (1, 2, 4):
        assert counts[factor] / len(draws) == pytest.approx(1 / 3, abs=0.02)


def test_clean_base_is_the_image(images, rng):
    cfg = DistortionConfig(lowres_factors=())
    pair = distortion.sample_training_pair(images[:1], cfg, rng)
    assert pair.factor == 1
    npt.assert_array_equal(pair.base, images[:1])


def test_training_batch(images, rng):
    bases, noisy, sigmas = distortion.sample_training_batch(images, DistortionConfig(), rng)
    assert bases.shape == noisy.shape == images.shape
    assert sigmas.shape == (4,)


def test_pair_stream(images, rng):
    stream = distortion.pair_stream(images, DistortionConfig(), 3, rng)
    for _ in range(2):
        bases, noisy = next(stream)
        assert bases.shape == noisy.shape == (3, 3, 16, 16)


def test_distort(images, rng):
    npt.assert_array_equal(distortion.distort(images), images)
    out = distortion.distort(images, sigma=0.1, factor=2, rng=rng)
    assert out.shape == images.shape
