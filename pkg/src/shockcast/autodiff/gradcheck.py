"""Central finite-difference oracles for gradient verification."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, backward
from . import ops


def _project(out: Tensor, weights):
    """Scalar ``<weights, out>`` (real part for complex outputs)."""
    if np.iscomplexobj(out.data):
        return ops.sum(ops.real(ops.mul(out, np.conj(weights))))
    return ops.sum(ops.mul(out, weights))


def _scalar(fn, weights):
    out = fn()
    if np.iscomplexobj(out.data):
        return float(np.real(np.sum(out.data * np.conj(weights))))
    return float(np.sum(out.data * weights))


def analytic_grads(fn, inputs, weights):
    for t in inputs:
        t.grad = None
    loss = _project(fn(), weights)
    backward(loss)
    return [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]


def numeric_grads(fn, inputs, weights, eps=1e-5):
    """Elementwise central differences; complex entries get ``dRe + 1j * dIm``."""
    grads = []
    for t in inputs:
        g = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        gflat = g.reshape(-1)
        parts = (1.0, 1j) if np.iscomplexobj(t.data) else (1.0,)
        for i in range(flat.size):
            orig = flat[i]
            for unit in parts:
                flat[i] = orig + eps * unit
                fp = _scalar(fn, weights)
                flat[i] = orig - eps * unit
                fm = _scalar(fn, weights)
                flat[i] = orig
                gflat[i] += unit * (fp - fm) / (2 * eps)
        grads.append(g)
    return grads


def relative_error(a, b):
    num = np.linalg.norm(np.ravel(a - b))
    den = max(np.linalg.norm(np.ravel(a)), np.linalg.norm(np.ravel(b)), 1e-300)
    return float(num / den) if den > 1e-300 else 0.0


def check_gradients(fn, inputs, eps=1e-5, seed=0):
    """Max relative error between backprop and finite differences over all ``inputs``.

    ``fn`` takes no arguments and rebuilds the graph from the (mutated in place)
    input tensors, so it must read them through closure.
    """
    rng = np.random.default_rng(seed)
    probe = fn()
    weights = rng.standard_normal(probe.shape)
    if np.iscomplexobj(probe.data):
        weights = weights + 1j * rng.standard_normal(probe.shape)
    ana = analytic_grads(fn, inputs, weights)
    num = numeric_grads(fn, inputs, weights, eps)
    return max(relative_error(a, n) for a, n in zip(ana, num))


def directional_check(fn, inputs, n_dirs=3, eps=1e-5, seed=0):
    """Random-projection check for large parameter sets.

    Compares ``<grad, d>`` against ``(L(x + eps d) - L(x - eps d)) / 2 eps`` for
    random unit directions ``d`` spanning all inputs at once; returns the worst
    relative error.
    """
    rng = np.random.default_rng(seed)
    probe = fn()
    weights = rng.standard_normal(probe.shape)
    ana = analytic_grads(fn, inputs, weights)
    worst = 0.0
    for _ in range(n_dirs):
        dirs = [rng.standard_normal(t.shape) for t in inputs]
        norm = np.sqrt(sum(float((d * d).sum()) for d in dirs))
        dirs = [d / norm for d in dirs]
        predicted = sum(float(np.real(np.sum(np.conj(g) * d))) for g, d in zip(ana, dirs))
        base = [t.data.copy() for t in inputs]
        for t, d, b in zip(inputs, dirs, base):
            t.data[...] = b + eps * d
        fp = _scalar(fn, weights)
        for t, d, b in zip(inputs, dirs, base):
            t.data[...] = b - eps * d
        fm = _scalar(fn, weights)
        for t, b in zip(inputs, base):
            t.data[...] = b
        measured = (fp - fm) / (2 * eps)
        err = abs(predicted - measured) / max(abs(predicted), abs(measured), 1e-300)
        worst = max(worst, err)
    return worst
