"""Parameter containers and layers on top of :mod:`shockcast.autodiff`."""

from __future__ import annotations

import math

import numpy as np

from .autodiff import Tensor, ops
from .exceptions import ShapeError


class Module:
    """Holds parameters and child modules in insertion order.

    Parameter names are dotted paths (``block0.conv1.weight``); that order is
    what the optimizer and the checkpoint writer see, so it must not depend on
    anything but construction order.
    """

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_children", {})

    def __setattr__(self, name, value):
        if isinstance(value, Tensor):
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        elif isinstance(value, (list, tuple)) and value and all(isinstance(v, Module) for v in value):
            value = ModuleList(value)
            self._children[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix=""):
        for k, p in self._params.items():
            yield prefix + k, p
        for k, m in self._children.items():
            yield from m.named_parameters(prefix + k + ".")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def n_parameters(self):
        return int(sum(p.size for p in self.parameters()))

    def state_dict(self):
        return {k: p.data.copy() for k, p in self.named_parameters()}

    def load_state_dict(self, state, strict=True):
        own = dict(self.named_parameters())
        if strict and set(own) != set(state):
            missing = sorted(set(own) - set(state))
            extra = sorted(set(state) - set(own))
            raise KeyError(f"state mismatch: missing {missing[:5]}, unexpected {extra[:5]}")
        for k, v in state.items():
            if k not in own:
                continue
            if own[k].shape != np.shape(v):
                raise ShapeError(f"load_state_dict[{k}]", own[k].shape, np.shape(v))
            own[k].data = np.array(v, dtype=own[k].dtype)
        return self

    def astype(self, dtype):
        for _, p in self.named_parameters():
            p.data = p.data.astype(dtype)
        return self

    @property
    def dtype(self):
        for _, p in self.named_parameters():
            return p.dtype
        return np.dtype(np.float64)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class ModuleList(Module):
    def __init__(self, modules):
        super().__init__()
        object.__setattr__(self, "_items", list(modules))
        for i, m in enumerate(self._items):
            self._children[str(i)] = m

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


def _param(arr):
    return Tensor(np.asarray(arr, dtype=np.float64), requires_grad=True)


def uniform_init(rng, shape, fan_in, scale=1.0):
    bound = scale / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Linear(Module):
    def __init__(self, d_in, d_out, rng, zero=False, bias=True):
        super().__init__()
        self.weight = _param(np.zeros((d_out, d_in)) if zero else uniform_init(rng, (d_out, d_in), d_in))
        self.bias = _param(np.zeros(d_out)) if bias else None

    def forward(self, x):
        return ops.linear(x, self.weight, self.bias)


class Conv2d(Module):
    def __init__(self, c_in, c_out, kernel, rng, zero=False):
        super().__init__()
        shape = (c_out, c_in, kernel, kernel)
        self.weight = _param(np.zeros(shape) if zero else uniform_init(rng, shape, c_in * kernel * kernel))
        self.bias = _param(np.zeros(c_out))

    def forward(self, x):
        return ops.conv2d(x, self.weight, self.bias)


class ConvTranspose2x2(Module):
    def __init__(self, c_in, c_out, rng):
        super().__init__()
        self.weight = _param(uniform_init(rng, (c_in, c_out, 2, 2), c_in))
        self.bias = _param(np.zeros(c_out))

    def forward(self, x):
        return ops.conv_transpose2x2(x, self.weight, self.bias)


def default_groups(channels, target=8):
    g = min(target, channels)
    while channels % g:
        g -= 1
    return g


class GroupNorm(Module):
    def __init__(self, channels, groups=None):
        super().__init__()
        self.groups = default_groups(channels) if groups is None else groups
        self.weight = _param(np.ones(channels))
        self.bias = _param(np.zeros(channels))

    def forward(self, x):
        return ops.group_norm(x, self.groups, self.weight, self.bias)


class MLP(Module):
    """``Linear -> GELU -> Linear``."""

    def __init__(self, d_in, d_hidden, d_out, rng):
        super().__init__()
        self.fc1 = Linear(d_in, d_hidden, rng)
        self.fc2 = Linear(d_hidden, d_out, rng)

    def forward(self, x):
        return self.fc2(ops.gelu(self.fc1(x)))
