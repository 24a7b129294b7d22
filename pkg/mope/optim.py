"""
Parameter update rules. Updates are applied in place on a ParamStore, so a
training step needs exclusive access to the store it updates.
"""

from dataclasses import dataclass, field

import numpy as np

from mope.settings import ADAM_BETA1, ADAM_BETA2, ADAM_EPS, MOMENTUM


@dataclass
class SGDState:
    velocity: dict = field(default_factory=dict)
    step: int = 0


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


def sgd_momentum_step(params, grads, state, lr, mu=MOMENTUM):
    """v <- mu*v + g; w <- w - lr*v."""
    for key, grad in grads.items():
        if key not in params:
            continue
        w = params[key]
        v = state.velocity.get(key)
        v = grad.astype(w.dtype) if v is None else mu * v + grad.astype(w.dtype)
        state.velocity[key] = v
        params[key] = w - lr * v
    state.step += 1


def adam_step(params, grads, state, lr, beta1=ADAM_BETA1, beta2=ADAM_BETA2, eps=ADAM_EPS):
    state.step += 1
    t = state.step
    correction1 = 1.0 - beta1 ** t
    correction2 = 1.0 - beta2 ** t
    for key, grad in grads.items():
        if key not in params:
            continue
        w = params[key]
        grad = grad.astype(w.dtype)
        m = beta1 * state.m.get(key, np.zeros_like(w)) + (1.0 - beta1) * grad
        v = beta2 * state.v.get(key, np.zeros_like(w)) + (1.0 - beta2) * grad * grad
        state.m[key], state.v[key] = m, v
        m_hat = m / correction1
        v_hat = v / correction2
        params[key] = w - lr * m_hat / (np.sqrt(v_hat) + eps)


class Optimizer:
    """Wraps one of the step functions together with its state."""

    def __init__(self, kind="adam", beta1=ADAM_BETA1, beta2=ADAM_BETA2, eps=ADAM_EPS, momentum=MOMENTUM):
        if kind not in ("adam", "sgd"):
            raise ValueError(f"Unknown optimizer {kind!r}; expected 'adam' or 'sgd'")
        self.kind = kind
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.momentum = momentum
        self.state = AdamState() if kind == "adam" else SGDState()

    def step(self, params, grads, lr):
        if self.kind == "adam":
            adam_step(params, grads, self.state, lr, self.beta1, self.beta2, self.eps)
        else:
            sgd_momentum_step(params, grads, self.state, lr, self.momentum)


def learning_rate_at(iteration, base_lr, schedule=()):
    """Base rate divided by every divisor whose milestone has been reached."""
    lr = base_lr
    for milestone, divisor in schedule:
        if iteration >= milestone:
            lr /= divisor
    return lr
