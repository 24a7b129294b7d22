"""
Training-scale experiments on the synthetic dataset. Run with --runslow.

Fixtures are module-scoped so the gate, the denoiser and the classifiers are
trained once and shared by the checks that need them.
"""

import numpy as np
import numpy.testing as npt
import pytest

from mope import evalkit, settings, training
from mope.distortion import DistortionConfig, distort, pair_stream
from mope.graph import Model, build_model
from mope.losses import gate_scores
from mope.networks import build_classifier, build_denoiser, build_discriminator, build_gating
from mope.router import Expert, Mope, MopeConfig
from mope.synth import SynthConfig, generate, labeled_batches

pytestmark = pytest.mark.slow

SIGMA = 0.15


def quiet(factory, **overrides):
    return factory(progress=False, **overrides)


@pytest.fixture(scope="module")
def dataset():
    return generate(SynthConfig())


@pytest.fixture(scope="module")
def heldout(dataset):
    images, labels = dataset.heldout
    noisy = distort(images, SIGMA, rng=np.random.default_rng([settings.SEED, 99]))
    return images, noisy, labels


@pytest.fixture(scope="module")
def untrained_gate():
    return build_model(build_gating(), settings.SEED)


@pytest.fixture(scope="module")
def gate(dataset):
    images, _ = dataset.train
    model = build_model(build_gating(), settings.SEED)
    stream = pair_stream(images, DistortionConfig(), settings.GATE_BATCH_SIZE, np.random.default_rng(0))
    training.train_gate(model, stream, quiet(training.gate_config))
    return model


@pytest.fixture(scope="module")
def denoiser(dataset):
    images, _ = dataset.train
    generator = build_model(build_denoiser(), settings.SEED)
    discriminator = build_model(build_discriminator(), settings.SEED + 1)
    stream = pair_stream(images, DistortionConfig(), settings.DENOISER_BATCH_SIZE, np.random.default_rng(1))
    training.train_denoiser(generator, discriminator, stream, quiet(training.denoiser_config))
    return generator


@pytest.fixture(scope="module")
def classifiers(dataset, gate, denoiser):
    images, labels = dataset.train
    spec = build_classifier(settings.NUM_CLASSES)
    cfg = quiet(training.classifier_config)
    dcfg = DistortionConfig()

    clean_only = build_model(spec, settings.SEED)
    stream = labeled_batches(images, labels, cfg.batch_size, np.random.default_rng(2))
    training.train_classifier(clean_only, stream, cfg)

    augmented = build_model(spec, settings.SEED)
    stream = training.augmented_batches(images, labels, dcfg, cfg.batch_size // 2, np.random.default_rng(3))
    training.train_classifier(augmented, stream, cfg)

    models = {"clean-only": clean_only, "augmented": augmented}
    for expert in (Expert.AVERAGE_FILTER, Expert.DENOISER):
        mope = Mope(gate, denoiser, MopeConfig(noisy_expert=expert))
        model = Model(clean_only.network, clean_only.params.copy())
        stream = training.augmented_batches(images, labels, dcfg, cfg.batch_size // 2, np.random.default_rng(4))
        training.finetune_downstream(model, mope, stream, quiet(training.finetune_config))
        models[expert.value] = (model, mope)
    return models


def gate_accuracy(model, clean, noisy):
    scores_clean = gate_scores(evalkit.map_batches(model, clean))
    scores_noisy = gate_scores(evalkit.map_batches(model, noisy))
    routed = np.concatenate([scores_clean > 0.5, scores_noisy > 0.5])
    truth = [True] * len(scores_clean) + [False] * len(scores_noisy)
    return evalkit.gate_report(routed, truth).accuracy


def test_untrained_gate_is_at_chance(untrained_gate, heldout):
    clean, noisy, _ = heldout
    assert 0.4 <= gate_accuracy(untrained_gate, clean, noisy) <= 0.6


def test_gate_separates_clean_from_noisy(gate, heldout):
    clean, noisy, _ = heldout
    assert gate_accuracy(gate, clean, noisy) >= 0.95


def test_routing_fidelity(gate, heldout):
    clean, noisy, _ = heldout
    mope = Mope(gate, cfg=MopeConfig(noisy_expert=Expert.AVERAGE_FILTER))
    outputs, decisions = mope.preprocess_batch(clean)
    for image, output, decision in zip(clean, outputs, decisions):
        if decision.chosen_expert == Expert.IDENTITY:
            npt.assert_array_equal(output, image)
    _, noisy_decisions = mope.preprocess_batch(noisy)
    report = evalkit.gate_report(decisions + noisy_decisions, [True] * len(clean) + [False] * len(noisy))
    assert report.accuracy >= 0.95


def test_denoiser_improves_fidelity(denoiser, heldout):
    clean, noisy, _ = heldout
    denoised = evalkit.map_batches(denoiser, noisy)
    assert evalkit.psnr(denoised, clean) >= evalkit.psnr(noisy, clean) + 2.0
    assert evalkit.mse(denoised, clean) <= 0.4 * evalkit.mse(noisy, clean)


def test_clean_classifier_learns_the_classes(classifiers, heldout):
    clean, _, labels = heldout
    assert evalkit.evaluate_classifier(classifiers["clean-only"], clean, labels) >= 0.9


def test_accuracy_ordering_under_noise(classifiers, heldout):
    clean, noisy, labels = heldout

    def accuracy(name, images):
        entry = classifiers[name]
        if isinstance(entry, tuple):
            model, mope = entry
            return evalkit.evaluate_classifier(model, images, labels, preprocess=lambda b: mope.preprocess_batch(b)[0])
        return evalkit.evaluate_classifier(entry, images, labels)

    clean_only = accuracy("clean-only", clean)
    assert abs(accuracy(Expert.DENOISER.value, clean) - clean_only) <= 0.01

    noisy_acc = {name: accuracy(name, noisy) for name in classifiers}
    assert noisy_acc[Expert.DENOISER.value] >= noisy_acc[Expert.AVERAGE_FILTER.value]
    assert noisy_acc[Expert.AVERAGE_FILTER.value] >= noisy_acc["augmented"]
    assert noisy_acc["augmented"] >= noisy_acc["clean-only"]
    assert noisy_acc[Expert.DENOISER.value] >= noisy_acc["clean-only"] + 0.10
