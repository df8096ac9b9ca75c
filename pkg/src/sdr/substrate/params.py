"""Parameter registry and the Adam optimizer."""
from collections import OrderedDict

import numpy as np

from .tensor import Tensor, get_dtype


class InvariantError(RuntimeError):
    """A ParamStore invariant was violated (e.g. a missing gradient)."""


class ParamStore:
    """Ordered name -> trainable tensor map, plus Adam moment buffers.

    Iteration follows insertion order, which fixes the update order and the
    checkpoint layout.
    """

    def __init__(self, rng_seed=0):
        self.rng_seed = int(rng_seed)
        self._entries = OrderedDict()
        self._m = {}
        self._v = {}

    def add(self, name, value):
        if name in self._entries:
            raise InvariantError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(value, dtype=get_dtype()), requires_grad=True)
        self._entries[name] = t
        return t

    def __getitem__(self, name):
        return self._entries[name]

    def __contains__(self, name):
        return name in self._entries

    def __iter__(self):
        return iter(self._entries)

    def __len__(self):
        return len(self._entries)

    def items(self):
        return self._entries.items()

    def names(self, prefix=""):
        return [n for n in self._entries if n.startswith(prefix)]

    def num_parameters(self, prefix=""):
        return int(np.sum([t.data.size for n, t in self._entries.items() if n.startswith(prefix)]))

    def zero_grad(self):
        for t in self._entries.values():
            t.grad = np.zeros_like(t.data)

    def clear_grad(self):
        for t in self._entries.values():
            t.grad = None

    def state(self):
        """Copy of all parameter arrays, keyed by name."""
        return OrderedDict((n, t.data.copy()) for n, t in self._entries.items())

    def load_state(self, state):
        missing = set(self._entries) ^ set(state)
        if missing:
            raise InvariantError(f"state does not match store: {sorted(missing)}")
        for n, t in self._entries.items():
            if state[n].shape != t.data.shape:
                raise InvariantError(f"shape mismatch for {n}: {state[n].shape} vs {t.data.shape}")
            t.data = np.array(state[n], dtype=t.data.dtype)


def adam_step(params, lr, beta1=0.9, beta2=0.999, eps=1e-8, step_index=1):
    """One bias-corrected Adam update over every entry, in insertion order.

    Gradients are zeroed afterwards. Raises InvariantError if any entry has
    no gradient.
    """
    if step_index < 1:
        raise ValueError("step_index is 1-based")
    for name, t in params.items():
        if t.grad is None:
            raise InvariantError(f"parameter {name!r} has no gradient")
    c1 = 1.0 - beta1 ** step_index
    c2 = 1.0 - beta2 ** step_index
    for name, t in params.items():
        g = t.grad.astype(t.data.dtype, copy=False)
        m = params._m.get(name)
        if m is None:
            m = np.zeros_like(t.data)
            params._v[name] = np.zeros_like(t.data)
        v = params._v[name]
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        params._m[name] = m.astype(t.data.dtype, copy=False)
        params._v[name] = v.astype(t.data.dtype, copy=False)
        t.data = (t.data - lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(t.data.dtype, copy=False)
        t.grad = np.zeros_like(t.data)
    return params


def kaiming_uniform(rng, shape, fan_in):
    bound = np.sqrt(6.0 / fan_in) if fan_in > 0 else 0.0
    return rng.uniform(-bound, bound, size=shape)
