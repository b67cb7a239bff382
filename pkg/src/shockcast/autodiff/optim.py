"""Adam and the cosine learning-rate schedule."""

import math

import numpy as np

BETAS = (0.9, 0.999)
EPS = 1e-8


def cosine_lr(step, total_steps, lr0):
    """``lr0 * (1 + cos(pi * step / total_steps)) / 2``, clamped to zero past the end."""
    if step >= total_steps:
        return 0.0
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))


def adam_step(params, grads, state, lr, betas=BETAS, eps=EPS):
    """In-place Adam update of the arrays in ``params``.

    ``state`` is a dict holding ``t`` and per-parameter ``m``/``v`` lists; it is
    created on first use.
    """
    b1, b2 = betas
    if not state:
        state["t"] = 0
        state["m"] = [np.zeros_like(p) for p in params]
        state["v"] = [np.zeros_like(p) for p in params]
    if len(state["m"]) != len(params) or any(m.shape != p.shape for m, p in zip(state["m"], params)):
        raise ValueError("optimizer state does not match parameters")
    state["t"] += 1
    t = state["t"]
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p, g, m, v in zip(params, grads, state["m"], state["v"]):
        if g is None:
            continue
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


class Adam:
    def __init__(self, tensors, lr=1e-3, betas=BETAS, eps=EPS):
        self.tensors = list(tensors)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.state = {}

    def zero_grad(self):
        for t in self.tensors:
            t.grad = None

    def step(self, lr=None):
        adam_step([t.data for t in self.tensors], [t.grad for t in self.tensors], self.state,
                  self.lr if lr is None else lr, self.betas, self.eps)
