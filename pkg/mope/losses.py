"""
Training objectives. Each function returns the loss value together with its
gradient(s) with respect to the inputs it is given.
"""

from collections import namedtuple

import numpy as np

from mope.exceptions import ShapeError

PROB_EPS = 1e-7

GanLoss = namedtuple("GanLoss", ["loss_d", "loss_g"])


def _clamp(p):
    return np.clip(p, PROB_EPS, 1.0 - PROB_EPS)


def _inside(p):
    return ((p > PROB_EPS) & (p < 1.0 - PROB_EPS)).astype(p.dtype)


def discriminator_loss(d_real, d_fake):
    """-log D(x) - log(1 - D(G(y))), log taken per patch then averaged.

    Returns (loss, grad_real, grad_fake).
    """
    real, fake = _clamp(d_real), _clamp(d_fake)
    loss = float(np.mean(-np.log(real)) + np.mean(-np.log(1.0 - fake)))
    grad_real = -_inside(d_real) / (real * d_real.size)
    grad_fake = _inside(d_fake) / ((1.0 - fake) * d_fake.size)
    return loss, grad_real, grad_fake


def generator_loss(d_fake):
    """Non-saturating generator objective -log D(G(y)); returns (loss, grad)."""
    fake = _clamp(d_fake)
    loss = float(np.mean(-np.log(fake)))
    return loss, -_inside(d_fake) / (fake * d_fake.size)


def gan_loss(d_real, d_fake):
    return GanLoss(discriminator_loss(d_real, d_fake)[0], generator_loss(d_fake)[0])


def sim_loss(denoised, clean):
    """Mean squared difference; returns (loss, grad wrt denoised)."""
    if denoised.shape != clean.shape:
        raise ShapeError(f"sim_loss: shapes {denoised.shape} and {clean.shape} differ")
    diff = denoised - clean
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def total_loss(loss_gan_g, loss_sim, lam):
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    return loss_gan_g + lam * loss_sim


def gate_scores(patch_map):
    """Per-image gate score: mean of the patch map."""
    return patch_map.mean(axis=(1, 2, 3))


def gate_scores_backward(patch_map, grad_scores):
    per_image = patch_map[0].size
    return np.broadcast_to(
        (grad_scores / per_image).reshape(-1, 1, 1, 1).astype(patch_map.dtype), patch_map.shape
    ).copy()


def gate_loss(h_clean, h_noisy):
    """-log H(x) - log(1 - H(F(x))) on per-image scores, averaged over the batch.

    Returns (loss, grad_clean, grad_noisy).
    """
    h_clean = np.asarray(h_clean, dtype=np.float64)
    h_noisy = np.asarray(h_noisy, dtype=np.float64)
    clean, noisy = _clamp(h_clean), _clamp(h_noisy)
    loss = float(np.mean(-np.log(clean)) + np.mean(-np.log(1.0 - noisy)))
    grad_clean = -_inside(h_clean) / (clean * h_clean.size)
    grad_noisy = _inside(h_noisy) / ((1.0 - noisy) * h_noisy.size)
    return loss, grad_clean, grad_noisy


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy of (n, k) logits against integer labels; returns (loss, grad)."""
    if logits.ndim != 2 or logits.shape[0] != labels.shape[0]:
        raise ShapeError(f"softmax_cross_entropy: logits {logits.shape} vs labels {labels.shape}")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    n = logits.shape[0]
    loss = float(-log_probs[np.arange(n), labels].mean())
    grad = np.exp(log_probs)
    grad[np.arange(n), labels] -= 1.0
    return loss, (grad / n).astype(logits.dtype)
