"""Differentiable operations on :class:`Tensor`.

Every function returns a new tensor; gradient rules are registered only when
an input requires a gradient.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .sparse import SparseMatrix
from .tensor import NonFiniteError, ShapeError, Tensor


class ConfigError(ValueError):
    pass


def _tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _tensor(a), _tensor(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    av, bv = a.values, b.values

    def backward(g):
        return (
            g @ bv.T if a.requires_grad else None,
            av.T @ g if b.requires_grad else None,
        )

    return Tensor._result(av @ bv, (a, b), backward)


def spmm(s: SparseMatrix, d: Tensor) -> Tensor:
    d = _tensor(d)
    if s.shape[1] != d.shape[0]:
        raise ShapeError(f"spmm: inner dimensions differ, {s.shape} @ {d.shape}")

    def backward(g):
        return (s.transpose().dot(g),)

    return Tensor._result(s.dot(d.values), (d,), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may also be a 1 x cols row vector (bias)."""
    a, b = _tensor(a), _tensor(b)
    if a.shape == b.shape:
        def backward(g):
            return g, g
    elif b.shape == (1, a.shape[1]):
        def backward(g):
            return g, g.sum(axis=0, keepdims=True)
    else:
        raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}")
    return Tensor._result(a.values + b.values, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _tensor(a), _tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"mul: shapes differ, {a.shape} vs {b.shape}")
    av, bv = a.values, b.values

    def backward(g):
        return g * bv, g * av

    return Tensor._result(av * bv, (a, b), backward)


def scale(x: Tensor, c: float) -> Tensor:
    x = _tensor(x)

    def backward(g):
        return (g * c,)

    return Tensor._result(x.values * x.values.dtype.type(c), (x,), backward)


def transpose(x: Tensor) -> Tensor:
    x = _tensor(x)

    def backward(g):
        return (g.T,)

    return Tensor._result(x.values.T, (x,), backward)


def sum_all(x: Tensor) -> Tensor:
    x = _tensor(x)
    shape = x.shape

    def backward(g):
        return (np.broadcast_to(g, shape).copy(),)

    return Tensor._result(x.values.sum(keepdims=True).reshape(1, 1), (x,), backward)


def mean_of(xs: Sequence[Tensor]) -> Tensor:
    """Elementwise average of same-shape tensors."""
    if not xs:
        raise ValueError("mean_of needs at least one tensor")
    if len(xs) == 1:
        return xs[0]
    total = xs[0]
    for x in xs[1:]:
        total = add(total, x)
    return scale(total, 1.0 / len(xs))


def relu(x: Tensor) -> Tensor:
    x = _tensor(x)
    mask = x.values > 0

    def backward(g):
        return (g * mask,)

    return Tensor._result(np.where(mask, x.values, 0).astype(x.dtype, copy=False), (x,), backward)


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: survivors are scaled by 1/(1-rate) so eval mode is the identity."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
    x = _tensor(x)
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    keep = rng.random(x.shape) >= rate
    mask = keep.astype(x.dtype) * x.dtype.type(1.0 / (1.0 - rate))

    def backward(g):
        return (g * mask,)

    return Tensor._result(x.values * mask, (x,), backward)


def _log_softmax(v: np.ndarray) -> np.ndarray:
    shifted = v - v.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax_rows(x: Tensor) -> Tensor:
    x = _tensor(x)
    shifted = x.values - x.values.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        return (p * (g - (g * p).sum(axis=1, keepdims=True)),)

    return Tensor._result(p, (x,), backward)


def log_softmax_rows(x: Tensor) -> Tensor:
    x = _tensor(x)
    out = _log_softmax(x.values)
    p = np.exp(out)

    def backward(g):
        return (g - p * g.sum(axis=1, keepdims=True),)

    return Tensor._result(out, (x,), backward)


def concat_cols(xs: Sequence[Tensor]) -> Tensor:
    xs = [_tensor(x) for x in xs]
    if not xs:
        raise ValueError("concat_cols needs at least one tensor")
    rows = {x.shape[0] for x in xs}
    if len(rows) != 1:
        raise ShapeError(f"concat_cols: row counts differ {sorted(rows)}")
    bounds = np.cumsum([0] + [x.shape[1] for x in xs])

    def backward(g):
        return tuple(g[:, lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:]))

    return Tensor._result(np.concatenate([x.values for x in xs], axis=1), xs, backward)


def nll_loss(logits: Tensor, labels, mask) -> Tensor:
    """Mean negative log-likelihood of ``labels`` over the ``mask`` rows.

    ``logits`` are unnormalized scores; the log-softmax is taken internally
    with the max-shift trick. Raises NonFiniteError if the loss is not finite.
    """
    logits = _tensor(logits)
    mask = np.asarray(mask, dtype=np.int64).ravel()
    if mask.size == 0:
        raise ValueError("nll_loss: empty node mask")
    labels = np.asarray(labels, dtype=np.int64).ravel()
    target = labels[mask]
    if target.min() < 0 or target.max() >= logits.shape[1]:
        raise ValueError("nll_loss: label outside the class range")

    sub = logits.values[mask]
    logp = _log_softmax(sub)
    picked = logp[np.arange(len(mask)), target]
    loss = -picked.mean()
    if not np.isfinite(loss):
        raise NonFiniteError(f"non-finite loss {loss!r}; logit range [{sub.min()}, {sub.max()}]")
    n = len(mask)

    def backward(g):
        local = np.exp(logp)
        local[np.arange(n), target] -= 1.0
        local *= g[0, 0] / n
        full = np.zeros_like(logits.values)
        np.add.at(full, mask, local)
        return (full,)

    return Tensor._result(np.array([[loss]], dtype=logits.dtype), (logits,), backward)
