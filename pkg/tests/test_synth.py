import numpy as np
import numpy.testing as npt
import pytest

from mope import synth
from mope.synth import SynthConfig

SMALL = SynthConfig(num_classes=3, image_size=16, samples_per_class=10, seed=3)


def test_generation_is_deterministic():
    a, b = synth.generate(SMALL), synth.generate(SMALL)
    npt.assert_array_equal(a.images, b.images)
    npt.assert_array_equal(a.split, b.split)
    assert not np.array_equal(a.images, synth.generate(SynthConfig(3, 16, 10, seed=4)).images)


def test_workers_do_not_change_the_dataset():
    npt.assert_array_equal(synth.generate(SMALL, workers=3).images, synth.generate(SMALL, workers=1).images)


def test_balanced_classes_and_split():
    dataset = synth.generate(SMALL)
    assert dataset.images.shape == (30, 3, 16, 16)
    assert dataset.images.dtype == np.float32
    assert dataset.images.min() >= 0 and dataset.images.max() <= 1
    _, train_labels = dataset.train
    _, heldout_labels = dataset.heldout
    npt.assert_array_equal(np.bincount(train_labels), [8, 8, 8])
    npt.assert_array_equal(np.bincount(heldout_labels), [2, 2, 2])
    assert len(dataset) == 30


def test_splits_are_disjoint():
    dataset = synth.generate(SMALL)
    train_ids = {i for i, s in zip(dataset.ids, dataset.split) if s == "train"}
    heldout_ids = {i for i, s in zip(dataset.ids, dataset.split) if s == "heldout"}
    assert train_ids.isdisjoint(heldout_ids)
    assert len(train_ids | heldout_ids) == 30


def test_classes_look_different():
    rng = np.random.default_rng(0)
    disk = synth.render(0, 32, rng)
    assert disk.shape == (3, 32, 32)
    # two colours per image
    assert len(np.unique(disk.reshape(3, -1), axis=1).T) == 2


@pytest.mark.parametrize("kwargs", [dict(num_classes=1), dict(num_classes=11), dict(image_size=8), dict(samples_per_class=0)])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        SynthConfig(**kwargs)


def test_save_and_load(tmp_path):
    dataset = synth.generate(SMALL)
    synth.save_dataset(dataset, tmp_path)
    assert (tmp_path / synth.MANIFEST_NAME).exists()
    loaded = synth.load_dataset(tmp_path)
    npt.assert_array_equal(loaded.images, dataset.images)
    npt.assert_array_equal(loaded.labels, dataset.labels)
    assert loaded.ids == dataset.ids
    npt.assert_array_equal(loaded.split, dataset.split)


def test_labeled_batches():
    dataset = synth.generate(SMALL)
    images, labels = next(synth.labeled_batches(dataset.images, dataset.labels, 5, np.random.default_rng(0)))
    assert images.shape == (5, 3, 16, 16)
    assert labels.shape == (5,)
