"""Adam optimizer over named parameter arrays (updates in place)."""

from __future__ import annotations

import numpy as np


class Adam:
    def __init__(
        self,
        params: dict[str, np.ndarray],
        learning_rate: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float | dict[str, float] = 0.0,
    ):
        self.params = params
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        # scalar decay for all parameters, or {name-prefix: decay}
        self.weight_decay = weight_decay
        self._m = {name: np.zeros_like(arr) for name, arr in params.items()}
        self._v = {name: np.zeros_like(arr) for name, arr in params.items()}
        self._t = 0

    def _decay_for(self, name: str) -> float:
        if isinstance(self.weight_decay, dict):
            for prefix, value in self.weight_decay.items():
                if name.startswith(prefix):
                    return value
            return 0.0
        return self.weight_decay

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self._t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1**self._t
        bias2 = 1.0 - b2**self._t
        for name, grad in grads.items():
            m = self._m[name]
            v = self._v[name]
            m *= b1
            m += (1.0 - b1) * grad
            v *= b2
            v += (1.0 - b2) * np.square(grad)
            update = (m / bias1) / (np.sqrt(v / bias2) + self.eps)
            decay = self._decay_for(name)
            if decay:
                # decoupled decay, applied to the weights directly
                self.params[name] *= 1.0 - self.learning_rate * decay
            self.params[name] -= self.learning_rate * update
