from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    """``|a - n| / max(|a|, |n|, floor)`` elementwise."""
    a, n = np.asarray(analytic), np.asarray(numeric)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def grad_check(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    epsilon: float = 1e-5,
    max_entries: int = 40,
    rng: np.random.Generator | None = None,
    floor: float = 1e-8,
    order: int = 2,
) -> float:
    """Largest relative error between backprop and central differences.

    ``loss_fn`` must rebuild the graph from the current parameter values and be
    deterministic (any dropout generator re-seeded inside it).  At most
    ``max_entries`` coordinates per parameter are probed, chosen by ``rng``.
    ``order`` selects the 2-point or the 4-point central stencil; the latter
    keeps roundoff far below 1e-6 for small gradient entries.
    """
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    rng = rng if rng is not None else np.random.default_rng(0)
    for p in params:
        p.grad = None
    loss_fn().backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    worst = 0.0
    for p, grad in zip(params, analytic):
        flat = p.data.reshape(-1)
        n = flat.size
        picks = np.arange(n) if n <= max_entries else np.sort(rng.choice(n, max_entries, replace=False))
        for idx in picks:
            original = flat[idx]

            def at(step):
                flat[idx] = original + step
                return loss_fn().item()

            if order == 2:
                numeric = (at(epsilon) - at(-epsilon)) / (2.0 * epsilon)
            else:
                numeric = (8.0 * (at(epsilon) - at(-epsilon)) - (at(2 * epsilon) - at(-2 * epsilon))) / (12.0 * epsilon)
            flat[idx] = original
            worst = max(worst, float(relative_error(grad.reshape(-1)[idx], numeric, floor)))
    for p in params:
        p.grad = None
    return worst
