import numpy as np
import numpy.testing as npt
import pytest

from mope.ppm import read_ppm, to_bytes, write_ppm


def test_write_then_read_8bit_image(tmp_path):
    pixels = np.arange(2 * 3 * 3, dtype=np.float64).reshape(1, 3, 2, 3) * 10 / 255.0
    path = tmp_path / "a.ppm"
    write_ppm(path, pixels)
    data = path.read_bytes()
    assert data.startswith(b"P6\n3 2\n255\n")
    npt.assert_array_equal(read_ppm(path), pixels.astype(np.float32))


def test_to_bytes_rounds_half_up_and_clips():
    image = np.array([0.5, 1.4 / 255, -0.2, 1.7]).reshape(1, 1, 4) * np.ones((3, 1, 1))
    npt.assert_array_equal(to_bytes(image)[0, :, 0], [128, 1, 0, 255])


def test_to_bytes_rejects_bad_shapes():
    with pytest.raises(ValueError):
        to_bytes(np.zeros((2, 3, 4, 4)))
    with pytest.raises(ValueError):
        to_bytes(np.zeros((1, 4, 4)))


def test_header_comments(tmp_path):
    path = tmp_path / "c.ppm"
    path.write_bytes(b"P6\n# made by hand\n1 1\n255\n" + bytes([255, 0, 128]))
    npt.assert_allclose(read_ppm(path)[0, :, 0, 0], [1.0, 0.0, 128 / 255], rtol=1e-6)


def test_rejects_other_formats(tmp_path):
    path = tmp_path / "p3.ppm"
    path.write_bytes(b"P3\n1 1\n255\n0 0 0\n")
    with pytest.raises(ValueError, match="magic"):
        read_ppm(path)
    path.write_bytes(b"P6\n1 1\n65535\n" + bytes(6))
    with pytest.raises(ValueError, match="8-bit"):
        read_ppm(path)
