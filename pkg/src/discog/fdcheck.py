"""Central finite-difference comparison for hand-written gradients."""

from __future__ import annotations

import numpy as np

DEFAULT_STEP = 1e-5


def finite_difference_grads(loss_fn, params: dict[str, np.ndarray], step: float = DEFAULT_STEP):
    """Central differences of loss_fn w.r.t. every coordinate of every array.

    loss_fn takes no arguments and must read the (mutated-in-place)
    params; arrays are restored exactly after probing.
    """
    grads = {}
    for name, arr in params.items():
        grad = np.zeros_like(arr)
        flat = arr.ravel()
        gflat = grad.ravel()
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            up = loss_fn()
            flat[i] = original - step
            down = loss_fn()
            flat[i] = original
            gflat[i] = (up - down) / (2.0 * step)
        grads[name] = grad
    return grads


def max_relative_error(analytic: dict[str, np.ndarray], numeric: dict[str, np.ndarray]) -> float:
    """max over coordinates of |a - f| / max(1e-6, |a|, |f|)."""
    worst = 0.0
    for name, a in analytic.items():
        f = numeric[name]
        if a.size == 0:
            continue
        denom = np.maximum(1e-6, np.maximum(np.abs(a), np.abs(f)))
        worst = max(worst, float(np.max(np.abs(a - f) / denom)))
    return worst
