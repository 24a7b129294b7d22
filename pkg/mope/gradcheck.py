"""
Central finite-difference checks of analytic gradients.

Checks run in float64: at float32 the difference quotient itself carries
errors near the tolerance, so parameters and inputs are promoted before
probing.
"""

import numpy as np

from mope.graph import backward, forward

DEFAULT_STEP = 1e-6
DEFAULT_SAMPLES = 50
ERROR_FLOOR = 1e-4


def relative_error(analytic, numeric, floor=ERROR_FLOOR):
    """Elementwise |a - n| / max(|a|, |n|, floor)."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def numerical_gradient(f, x, indices, step=DEFAULT_STEP):
    """Central differences of the scalar f() wrt x at the given flat indices; x is perturbed in place."""
    flat = x.reshape(-1)
    grads = np.empty(len(indices), dtype=np.float64)
    for n, i in enumerate(indices):
        original = flat[i]
        flat[i] = original + step
        plus = f()
        flat[i] = original - step
        minus = f()
        flat[i] = original
        grads[n] = (plus - minus) / (2.0 * step)
    return grads


def sample_indices(size, samples, rng):
    if size <= samples:
        return np.arange(size)
    return rng.choice(size, size=samples, replace=False)


def check_gradients(f, tensors, analytic, rng, samples=DEFAULT_SAMPLES, step=DEFAULT_STEP):
    """Max relative error per tensor name.

    `tensors` maps names to the float64 arrays f() reads; `analytic` maps the
    same names to their analytic gradients.
    """
    errors = {}
    for name, tensor in tensors.items():
        indices = sample_indices(tensor.size, samples, rng)
        numeric = numerical_gradient(f, tensor, indices, step)
        errors[name] = float(relative_error(analytic[name].reshape(-1)[indices], numeric).max())
    return errors


def network_gradient_errors(network, params, x, rng, samples=DEFAULT_SAMPLES, step=DEFAULT_STEP):
    """Check backward() of a whole network on loss = sum(output * r) for a fixed random r.

    Returns {tensor name or "input": max relative error}.
    """
    params = params.astype(np.float64)
    x = np.array(x, dtype=np.float64)
    out, tape = forward(network, params, x, record_tape=True)
    weights = rng.standard_normal(out.shape)
    grads, grad_input = backward(network, params, tape, weights)

    def loss():
        return float(np.sum(forward(network, params, x)[0] * weights))

    tensors = {params.tensor_name(key): params[key] for key in params.keys()}
    analytic = {params.tensor_name(key): grads[key] for key in params.keys()}
    tensors["input"], analytic["input"] = x, grad_input
    return check_gradients(loss, tensors, analytic, rng, samples, step)
