"""
Procedural labeled images standing in for a real photo dataset.

Every class is a distinct shape or texture rendered at a random position,
scale, rotation and colour pair. Sample i is rendered from its own generator
seeded with (seed, i), so generation can be spread over workers and still
produce the same dataset in the same order.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd

from mope.ppm import read_ppm, write_ppm
from mope.settings import DATA_WORKERS, IMAGE_SIZE, NUM_CLASSES, SAMPLES_PER_CLASS, SEED, TRAIN_FRACTION

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.csv"
IMAGES_DIR = "images"


def _disk(u, v):
    return u * u + v * v <= 1.0


def _square(u, v):
    return np.maximum(np.abs(u), np.abs(v)) <= 0.8


def _triangle(u, v):
    return (v >= -0.5) & (v <= 1.0 - np.sqrt(3.0) * np.abs(u))


def _ring(u, v):
    r = np.sqrt(u * u + v * v)
    return (r >= 0.55) & (r <= 1.0)


def _cross(u, v):
    au, av = np.abs(u), np.abs(v)
    return ((au <= 0.3) & (av <= 1.0)) | ((av <= 0.3) & (au <= 1.0))


def _stripes(u, v):
    return _square(u, v) & (np.sin(u * 3.0 * np.pi) > 0)


def _checker(u, v):
    return _square(u, v) & ((np.floor(u * 2.5) + np.floor(v * 2.5)) % 2 == 0)


def _dots(u, v):
    fu, fv = (u * 2.5) % 1.0 - 0.5, (v * 2.5) % 1.0 - 0.5
    return _square(u, v) & (fu * fu + fv * fv <= 0.09)


def _target(u, v):
    return _disk(u, v) & (np.sin(np.sqrt(u * u + v * v) * 3.0 * np.pi) > 0)


def _frame(u, v):
    m = np.maximum(np.abs(u), np.abs(v))
    return (m >= 0.5) & (m <= 0.9)


SHAPES = (_disk, _square, _triangle, _ring, _cross, _stripes, _checker, _dots, _target, _frame)


@dataclass(frozen=True)
class SynthConfig:
    num_classes: int = NUM_CLASSES
    image_size: int = IMAGE_SIZE
    samples_per_class: int = SAMPLES_PER_CLASS
    seed: int = SEED

    def __post_init__(self):
        if not 2 <= self.num_classes <= len(SHAPES):
            raise ValueError(f"num_classes must lie in [2, {len(SHAPES)}], got {self.num_classes}")
        if self.image_size < 16:
            raise ValueError(f"image_size must be >= 16, got {self.image_size}")
        if self.samples_per_class < 1:
            raise ValueError(f"samples_per_class must be >= 1, got {self.samples_per_class}")


@dataclass
class SyntheticDataset:
    images: np.ndarray
    labels: np.ndarray
    ids: list
    split: np.ndarray

    def subset(self, name):
        mask = self.split == name
        return self.images[mask], self.labels[mask]

    @property
    def train(self):
        return self.subset("train")

    @property
    def heldout(self):
        return self.subset("heldout")

    def __len__(self):
        return len(self.ids)


def _colour_pair(rng):
    # 8-bit colours so images survive a PPM round trip bit-exactly
    bg = rng.integers(0, 256, size=3)
    while True:
        fg = rng.integers(0, 256, size=3)
        if abs(fg.mean() - bg.mean()) >= 90:
            return fg / 255.0, bg / 255.0


def render(label, size, rng):
    """Render one (3, size, size) image of class `label`."""
    radius = rng.uniform(0.25, 0.4) * size
    cx, cy = rng.uniform(radius * 0.8, size - radius * 0.8, size=2)
    theta = rng.uniform(0.0, 2.0 * np.pi)
    fg, bg = _colour_pair(rng)
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    dx, dy = (xx - cx) / radius, (yy - cy) / radius
    u = np.cos(theta) * dx + np.sin(theta) * dy
    v = -np.sin(theta) * dx + np.cos(theta) * dy
    mask = SHAPES[label](u, v)
    image = np.where(mask[None], fg[:, None, None], bg[:, None, None])
    return image.astype(np.float32)


def _render_sample(args):
    seed, index, label, size = args
    return render(label, size, np.random.default_rng([seed, index]))


def generate(cfg, workers=DATA_WORKERS):
    """Render `samples_per_class` images per class and split them 80/20 per class."""
    spc = cfg.samples_per_class
    labels = np.repeat(np.arange(cfg.num_classes), spc)
    jobs = [(cfg.seed, i, int(label), cfg.image_size) for i, label in enumerate(labels)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            images = list(pool.map(_render_sample, jobs))
    else:
        images = [_render_sample(job) for job in jobs]

    split = np.full(len(labels), "heldout", dtype=object)
    split_rng = np.random.default_rng(cfg.seed)
    n_train = int(round(spc * TRAIN_FRACTION))
    for label in range(cfg.num_classes):
        members = split_rng.permutation(spc) + label * spc
        split[members[:n_train]] = "train"

    ids = [f"{i:06d}" for i in range(len(labels))]
    logger.info("Generated %d images (%d classes, %dx%d)", len(ids), cfg.num_classes, cfg.image_size, cfg.image_size)
    return SyntheticDataset(np.stack(images), labels.astype(np.int64), ids, split)


def save_dataset(dataset, directory):
    """Write manifest.csv (id, label, split) and one PPM per image."""
    image_dir = os.path.join(directory, IMAGES_DIR)
    os.makedirs(image_dir, exist_ok=True)
    for image_id, image in zip(dataset.ids, dataset.images):
        write_ppm(os.path.join(image_dir, f"{image_id}.ppm"), image)
    manifest = pd.DataFrame({"id": dataset.ids, "label": dataset.labels, "split": dataset.split})
    manifest.to_csv(os.path.join(directory, MANIFEST_NAME), index=False)
    logger.info("Saved %d images to %s", len(dataset), directory)


def load_dataset(directory):
    manifest = pd.read_csv(os.path.join(directory, MANIFEST_NAME), dtype={"id": str, "split": str})
    missing = {"id", "label", "split"} - set(manifest.columns)
    if missing:
        raise ValueError(f"{directory}: manifest is missing columns {sorted(missing)}")
    images = [read_ppm(os.path.join(directory, IMAGES_DIR, f"{image_id}.ppm"))[0] for image_id in manifest["id"]]
    return SyntheticDataset(
        np.stack(images),
        manifest["label"].to_numpy(dtype=np.int64),
        list(manifest["id"]),
        manifest["split"].to_numpy(dtype=object),
    )


def labeled_batches(images, labels, batch_size, rng):
    """Endless stream of (images, labels) batches drawn with replacement."""
    while True:
        picks = rng.integers(0, images.shape[0], size=batch_size)
        yield images[picks], labels[picks]
