from __future__ import annotations

import numpy as np

from sertk.errors import DimensionMismatch


class RMSprop:
    """RMSprop with per-update learning-rate decay.

    At update ``t`` (starting from 0) the step size is
    ``lr / (1 + decay * t)``; each parameter keeps a running mean of squared
    gradients ``cache = rho * cache + (1 - rho) * g**2`` and moves by
    ``-lr_t * g / (sqrt(cache) + epsilon)``. Parameters are updated in place.
    """

    def __init__(self, lr=1e-5, decay=1e-6, rho=0.9, epsilon=1e-8):
        self.lr = lr
        self.decay = decay
        self.rho = rho
        self.epsilon = epsilon
        self.t = 0
        self.cache: dict[str, np.ndarray] = {}

    def current_lr(self) -> float:
        return self.lr / (1.0 + self.decay * self.t)

    def step(self, params: dict, grads: dict) -> None:
        lr_t = self.current_lr()
        for name, p in params.items():
            g = grads[name]
            if g.shape != p.shape:
                raise DimensionMismatch(f"{name}: gradient {g.shape} vs parameter {p.shape}")
            cache = self.cache.get(name)
            if cache is None:
                cache = self.cache[name] = np.zeros_like(p)
            cache *= self.rho
            cache += (1.0 - self.rho) * g * g
            p -= lr_t * g / (np.sqrt(cache) + self.epsilon)
        self.t += 1
