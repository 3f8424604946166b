"""Minimal Adam with bias correction, numpy arrays in place."""

import numpy as np

from rfoam.errors import ShapeMismatch


class AdamState:
    def __init__(self, shape):
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.step = 0


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One update; mutates ``params`` and ``state``, returns ``params``."""
    params = np.asarray(params)
    grads = np.asarray(grads)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ShapeMismatch(
            f"param/grad/state shapes differ: {params.shape} vs {grads.shape}"
        )
    state.step += 1
    state.m *= beta1
    state.m += (1.0 - beta1) * grads
    state.v *= beta2
    state.v += (1.0 - beta2) * grads * grads
    m_hat = state.m / (1.0 - beta1 ** state.step)
    v_hat = state.v / (1.0 - beta2 ** state.step)
    params -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return params
