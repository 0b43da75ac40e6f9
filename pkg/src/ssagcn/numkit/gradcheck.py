"""Central finite-difference checks for the reverse-mode tape."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor

# denominators below this are treated as absolute error
_FLOOR = 1e-5


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), _FLOOR)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def numeric_gradient(loss_fn: Callable[[], Tensor], param: Tensor, epsilon: float) -> np.ndarray:
    values = param.values
    out = np.zeros_like(values, dtype=np.float64)
    for idx in np.ndindex(values.shape):
        orig = values[idx]
        values[idx] = orig + epsilon
        up = loss_fn().item()
        values[idx] = orig - epsilon
        down = loss_fn().item()
        values[idx] = orig
        out[idx] = (up - down) / (2.0 * epsilon)
    return out


def grad_check_params(loss_fn: Callable[[], Tensor], params: Sequence[Tensor], epsilon: float = 1e-6) -> dict[str, float]:
    """Compare backward() against finite differences for every tensor in ``params``.

    ``loss_fn`` must rebuild the graph from the current parameter values on
    each call and be deterministic. Returns max relative error per parameter
    (keyed by name, or by position when unnamed).
    """
    for p in params:
        p.grad = None
    loss_fn().backward()
    report = {}
    for i, p in enumerate(params):
        analytic = np.zeros_like(p.values) if p.grad is None else p.grad.copy()
        numeric = numeric_gradient(loss_fn, p, epsilon)
        report[p.name or str(i)] = relative_error(analytic, numeric)
        p.grad = None
    return report


def grad_check(fn: Callable[[Tensor], Tensor], point, epsilon: float = 1e-6) -> float:
    """Max relative error between the analytic and central-difference gradient of ``fn`` at ``point``."""
    x = Tensor(np.array(point, dtype=np.float64), requires_grad=True)
    return max(grad_check_params(lambda: fn(x), [x], epsilon).values())
