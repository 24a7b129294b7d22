"""
Training procedures: the adversarial denoiser, the gate, and the proxy
classifier (clean-only, augmented, and fine-tuned behind the MoPE front end).

Each procedure owns the ParamStores it updates for the duration of the run.
Runs are deterministic for a fixed (seed, config, data stream).
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Tuple

import numpy as np
from tqdm import tqdm

from mope import settings
from mope.distortion import sample_training_batch
from mope.exceptions import TrainingDivergedError
from mope.graph import backward, forward
from mope.items import ClassifierItem, GateItem, LossItem
from mope.losses import (
    discriminator_loss,
    gate_loss,
    gate_scores,
    gate_scores_backward,
    generator_loss,
    sim_loss,
    softmax_cross_entropy,
    total_loss,
)
from mope.networks.classifier import logits as flatten_logits
from mope.optim import Optimizer, learning_rate_at

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    iterations: int
    batch_size: int
    learning_rate: float
    lr_schedule: Tuple[Tuple[int, float], ...] = ()
    optimizer: str = "adam"
    beta1: float = settings.ADAM_BETA1
    beta2: float = settings.ADAM_BETA2
    eps: float = settings.ADAM_EPS
    momentum: float = settings.MOMENTUM
    lambda_sim: float = settings.LAMBDA_SIM
    adv_warmup: int = 0
    seed: int = settings.SEED
    log_every: int = settings.LOG_EVERY
    progress: bool = True

    def make_optimizer(self):
        return Optimizer(self.optimizer, self.beta1, self.beta2, self.eps, self.momentum)

    def lr_at(self, iteration):
        return learning_rate_at(iteration, self.learning_rate, self.lr_schedule)


def gate_config(**overrides):
    cfg = TrainConfig(settings.GATE_ITERATIONS, settings.GATE_BATCH_SIZE, settings.GATE_LR)
    return replace(cfg, **overrides)


def denoiser_config(**overrides):
    cfg = TrainConfig(
        settings.DENOISER_ITERATIONS,
        settings.DENOISER_BATCH_SIZE,
        settings.DENOISER_LR,
        lr_schedule=settings.DENOISER_LR_SCHEDULE,
        adv_warmup=settings.DENOISER_ADV_WARMUP,
    )
    return replace(cfg, **overrides)


def classifier_config(**overrides):
    cfg = TrainConfig(
        settings.CLASSIFIER_ITERATIONS,
        settings.CLASSIFIER_BATCH_SIZE,
        settings.CLASSIFIER_LR,
        lr_schedule=settings.CLASSIFIER_LR_SCHEDULE,
        optimizer="sgd",
    )
    return replace(cfg, **overrides)


def finetune_config(**overrides):
    cfg = classifier_config(
        iterations=settings.FINETUNE_ITERATIONS, learning_rate=settings.FINETUNE_LR, lr_schedule=()
    )
    return replace(cfg, **overrides)


@dataclass
class TrainResult:
    model: object
    history: list = field(default_factory=list)


@dataclass
class DenoiserResult:
    generator: object
    discriminator: object
    history: list = field(default_factory=list)


def _check_finite(iteration, *values):
    if not all(np.isfinite(v) for v in values):
        raise TrainingDivergedError(iteration)


def _emit(item, history, pipelines):
    history.append(item)
    for pipeline in pipelines:
        pipeline.process_item(item)


def _iterations(cfg, desc):
    return tqdm(range(cfg.iterations), desc=desc, disable=not cfg.progress, leave=False)


def _add(a, b):
    out = a.copy()
    for key, value in b.items():
        out[key] = out[key] + value if key in out else value
    return out


def train_denoiser(generator, discriminator, stream, cfg, pipelines=()):
    """Alternate one discriminator step and one generator step per iteration.

    `stream` yields (clean, noisy) batches; the generator minimizes the
    non-saturating adversarial loss plus lambda_sim times the similarity loss.
    For the first `cfg.adv_warmup` iterations the generator step uses the
    similarity loss only while the discriminator keeps training.
    """
    g_net, d_net = generator.network, discriminator.network
    g_opt, d_opt = cfg.make_optimizer(), cfg.make_optimizer()
    history = []
    for it in _iterations(cfg, "denoiser"):
        lr = cfg.lr_at(it)
        clean, noisy = next(stream)
        fake, g_tape = forward(g_net, generator.params, noisy, record_tape=True)

        d_real, real_tape = forward(d_net, discriminator.params, clean, record_tape=True)
        d_fake, fake_tape = forward(d_net, discriminator.params, fake, record_tape=True)
        loss_d, grad_real, grad_fake = discriminator_loss(d_real, d_fake)
        real_grads, _ = backward(d_net, discriminator.params, real_tape, grad_real)
        fake_grads, _ = backward(d_net, discriminator.params, fake_tape, grad_fake)
        d_opt.step(discriminator.params, _add(real_grads, fake_grads), lr)

        d_fake, fake_tape = forward(d_net, discriminator.params, fake, record_tape=True)
        loss_g, grad_adv = generator_loss(d_fake)
        loss_sim, grad_sim = sim_loss(fake, clean)
        grad_image = cfg.lambda_sim * grad_sim
        if it >= cfg.adv_warmup:
            _, grad_fake_image = backward(d_net, discriminator.params, fake_tape, grad_adv)
            grad_image = grad_image + grad_fake_image
        g_grads, _ = backward(g_net, generator.params, g_tape, grad_image)
        g_opt.step(generator.params, g_grads, lr)

        _check_finite(it, loss_d, loss_g, loss_sim)
        _emit(LossItem(it, loss_d, loss_g, loss_sim, lr), history, pipelines)
        if cfg.log_every and it % cfg.log_every == 0:
            logger.info(
                "denoiser it=%d loss_d=%.4f loss_g=%.4f loss_sim=%.5f total=%.4f",
                it, loss_d, loss_g, loss_sim, total_loss(loss_g, loss_sim, cfg.lambda_sim),
            )
    return DenoiserResult(generator, discriminator, history)


def train_gate(gate, stream, cfg, pipelines=()):
    """Fit the gate as a clean (score 1) vs noisy (score 0) classifier on mean patch scores."""
    net = gate.network
    opt = cfg.make_optimizer()
    history = []
    for it in _iterations(cfg, "gate"):
        lr = cfg.lr_at(it)
        clean, noisy = next(stream)
        n = clean.shape[0]
        patch_map, tape = forward(net, gate.params, np.concatenate([clean, noisy]), record_tape=True)
        scores = gate_scores(patch_map)
        loss, grad_clean, grad_noisy = gate_loss(scores[:n], scores[n:])
        grad_map = gate_scores_backward(patch_map, np.concatenate([grad_clean, grad_noisy]))
        grads, _ = backward(net, gate.params, tape, grad_map)
        opt.step(gate.params, grads, lr)

        _check_finite(it, loss)
        accuracy = float((np.sum(scores[:n] > 0.5) + np.sum(scores[n:] <= 0.5)) / (2 * n))
        _emit(GateItem(it, loss, accuracy, lr), history, pipelines)
        if cfg.log_every and it % cfg.log_every == 0:
            logger.info("gate it=%d loss=%.4f batch_acc=%.3f", it, loss, accuracy)
    return TrainResult(gate, history)


def augmented_batches(images, labels, dcfg, batch_size, rng):
    """Labeled batches where each drawn image contributes its base and its noisy counterpart."""
    while True:
        picks = rng.integers(0, images.shape[0], size=batch_size)
        bases, noisy, _ = sample_training_batch(images[picks], dcfg, rng)
        yield np.concatenate([bases, noisy]), np.concatenate([labels[picks], labels[picks]])


def train_classifier(classifier, stream, cfg, preprocess=None, pipelines=(), desc="classifier"):
    """Cross-entropy training; `preprocess` (frozen) is applied to every batch first."""
    net = classifier.network
    opt = cfg.make_optimizer()
    history = []
    for it in _iterations(cfg, desc):
        lr = cfg.lr_at(it)
        images, labels = next(stream)
        if preprocess is not None:
            images = preprocess(images)
        out, tape = forward(net, classifier.params, images, record_tape=True)
        logits = flatten_logits(out)
        loss, grad = softmax_cross_entropy(logits, labels)
        grads, _ = backward(net, classifier.params, tape, grad.reshape(out.shape))
        opt.step(classifier.params, grads, lr)

        _check_finite(it, loss)
        accuracy = float(np.mean(np.argmax(logits, axis=1) == labels))
        _emit(ClassifierItem(it, loss, accuracy, lr), history, pipelines)
        if cfg.log_every and it % cfg.log_every == 0:
            logger.info("%s it=%d loss=%.4f batch_acc=%.3f lr=%g", desc, it, loss, accuracy, lr)
    return TrainResult(classifier, history)


def finetune_downstream(classifier, mope, stream, cfg, pipelines=()):
    """Fine-tune the classifier behind a frozen MoPE front end; only the task loss drives updates."""
    frozen = [mope.gate.params.copy()]
    if mope.denoiser is not None:
        frozen.append(mope.denoiser.params.copy())
    result = train_classifier(
        classifier,
        stream,
        cfg,
        preprocess=lambda images: mope.preprocess_batch(images)[0],
        pipelines=pipelines,
        desc=f"finetune-{mope.cfg.noisy_expert.value}",
    )
    after = [mope.gate.params] + ([mope.denoiser.params] if mope.denoiser is not None else [])
    if not all(before.equals(now) for before, now in zip(frozen, after)):
        raise RuntimeError("MoPE experts changed during fine-tuning")
    return result
