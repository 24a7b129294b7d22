"""Binary PPM (P6) image reading and writing for 8-bit RGB images."""

import numpy as np


def to_bytes(image):
    """(3, h, w) or (1, 3, h, w) image in [0, 1] -> (h, w, 3) uint8, scaled x255 with round-half-up."""
    image = np.asarray(image)
    if image.ndim == 4:
        if image.shape[0] != 1:
            raise ValueError(f"Expected a single image, got a batch of {image.shape[0]}")
        image = image[0]
    if image.ndim != 3 or image.shape[0] != 3:
        raise ValueError(f"Expected a (3, h, w) RGB image, got shape {image.shape}")
    scaled = np.floor(np.clip(image.astype(np.float64), 0.0, 1.0) * 255.0 + 0.5)
    return scaled.astype(np.uint8).transpose(1, 2, 0)


def write_ppm(path, image):
    pixels = to_bytes(image)
    h, w = pixels.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(pixels).tobytes())


def _header_tokens(data):
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("Truncated PPM header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def read_ppm(path):
    """Read a P6 file into a (1, 3, h, w) float32 array in [0, 1]."""
    with open(path, "rb") as fh:
        data = fh.read()
    tokens, offset = _header_tokens(data)
    if tokens[0] != b"P6":
        raise ValueError(f"{path}: not a binary PPM (magic {tokens[0]!r})")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PPM files are supported (maxval {maxval})")
    raster = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=offset)
    image = raster.reshape(h, w, 3).transpose(2, 0, 1).astype(np.float64) / 255.0
    return image.astype(np.float32)[None]
