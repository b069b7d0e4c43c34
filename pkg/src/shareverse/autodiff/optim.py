"""Named parameter collections and the Adam optimizer."""

from __future__ import annotations

from collections.abc import MutableMapping

import numpy as np

from .tensor import Tensor


class ParamSet(MutableMapping):
    """name -> Tensor map iterated in lexicographic order, plus Adam moments."""

    def __init__(self, tensors=None):
        self._params: dict[str, Tensor] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        for name, value in (tensors or {}).items():
            self[name] = value

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __setitem__(self, name: str, value) -> None:
        if not isinstance(value, Tensor):
            value = Tensor(value)
        if not value.requires_grad:
            value = Tensor(value.data, requires_grad=True)
        self._params[name] = value

    def __delitem__(self, name: str) -> None:
        del self._params[name]
        self.m.pop(name, None)
        self.v.pop(name, None)

    def __iter__(self):
        return iter(sorted(self._params))

    def __len__(self):
        return len(self._params)

    def __contains__(self, name) -> bool:
        return name in self._params

    def numel(self) -> int:
        return sum(p.size for p in self._params.values())

    def astype(self, dtype) -> "ParamSet":
        out = ParamSet({k: Tensor(v.data, dtype=dtype) for k, v in self.items()})
        out.m = {k: v.astype(dtype) for k, v in self.m.items()}
        out.v = {k: v.astype(dtype) for k, v in self.v.items()}
        return out

    def copy(self) -> "ParamSet":
        out = ParamSet()
        out._params = dict(self._params)
        out.m = {k: v.copy() for k, v in self.m.items()}
        out.v = {k: v.copy() for k, v in self.v.items()}
        return out


class Adam:
    """Adam with bias correction; moments are stored on the ParamSet."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.95, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps

    def step(self, params: ParamSet, grads: dict, t: int) -> None:
        """Apply update number ``t`` (1-based) in place on ``params``."""
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** t
        c2 = 1.0 - b2 ** t
        for name in params:
            p = params[name]
            g = grads[name]
            m = params.m.get(name)
            v = params.v.get(name)
            if m is None:
                m = np.zeros_like(p.data)
                v = np.zeros_like(p.data)
            m = b1 * m + (1.0 - b1) * g
            v = b2 * v + (1.0 - b2) * (g * g)
            update = (self.lr / c1) * m / (np.sqrt(v / c2) + self.eps)
            params.m[name] = m.astype(p.dtype, copy=False)
            params.v[name] = v.astype(p.dtype, copy=False)
            params[name] = Tensor((p.data - update).astype(p.dtype), requires_grad=True)
