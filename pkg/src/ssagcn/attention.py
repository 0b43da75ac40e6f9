"""Bidirectional cross-attention between the structural and semantic embedding tables.

Queries and keys come from one table, values from the other, and attention
runs over all nodes (no adjacency mask). Scores are scaled by 1/sqrt(d_a).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numkit import Tensor, matmul, mean_of, scale, softmax_rows, transpose
from .numkit.tensor import ShapeError


@dataclass
class Head:
    query: Tensor
    key: Tensor

    @property
    def dim(self) -> int:
        return self.query.shape[1]


def glorot(rng: np.random.Generator, rows: int, cols: int, dtype=np.float32) -> np.ndarray:
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols)).astype(dtype)


def make_heads(src_dim: int, attn_dim: int, num_heads: int, rng: np.random.Generator,
               prefix: str = "", dtype=np.float32, requires_grad: bool = True, tied_init: bool = True) -> list[Head]:
    """Glorot-initialized projections, one query/key pair per head.

    With ``tied_init`` the key starts as a copy of the query, so the initial
    score matrix X W W^T X^T is a similarity kernel and each node attends most
    to nodes like itself; with independent draws the initial attention is
    close to uniform and every output row collapses to the column mean.
    The two matrices are still separate parameters.
    """
    if num_heads < 1:
        raise ValueError("num_heads must be >= 1")
    heads = []
    for i in range(num_heads):
        wq = glorot(rng, src_dim, attn_dim, dtype)
        wk = wq.copy() if tied_init else glorot(rng, src_dim, attn_dim, dtype)
        q = Tensor(wq, requires_grad=requires_grad, name=f"{prefix}query{i}")
        k = Tensor(wk, requires_grad=requires_grad, name=f"{prefix}key{i}")
        heads.append(Head(q, k))
    return heads


def _check_rows(*mats):
    rows = {m.shape[0] for m in mats}
    if len(rows) != 1:
        raise ShapeError(f"attention inputs disagree on node count: {sorted(rows)}")


def attention_weights(queries_src, keys_src, w_query, w_key) -> Tensor:
    queries_src, keys_src = Tensor._as(queries_src), Tensor._as(keys_src)
    _check_rows(queries_src, keys_src)
    q = matmul(queries_src, w_query)
    k = matmul(keys_src, w_key)
    scores = scale(matmul(q, transpose(k)), 1.0 / np.sqrt(w_query.shape[1]))
    return softmax_rows(scores)


def cross_attention(queries_src, keys_src, values, w_query, w_key) -> Tensor:
    """softmax((X Wq)(X Wk)^T / sqrt(d_a)) V for one head."""
    values = Tensor._as(values)
    _check_rows(Tensor._as(queries_src), Tensor._as(keys_src), values)
    return matmul(attention_weights(queries_src, keys_src, w_query, w_key), values)


def multi_head(queries_src, keys_src, values, heads: list[Head]) -> Tensor:
    """Average of independent heads, so the output width equals the value width."""
    if not heads:
        raise ValueError("multi_head needs at least one head")
    outs = [cross_attention(queries_src, keys_src, values, h.query, h.key) for h in heads]
    return mean_of(outs)


def blocked_attention(queries_src: np.ndarray, keys_src: np.ndarray, values: np.ndarray,
                      heads: list[Head], block_rows: int = 512) -> np.ndarray:
    """Inference-only evaluation of :func:`multi_head` a block of query rows at a time.

    Peak memory is block_rows x N per head instead of N x N.
    """
    _check_rows(queries_src, keys_src, values)
    n = queries_src.shape[0]
    total = np.zeros((n, values.shape[1]), dtype=np.result_type(values, heads[0].query.values))
    for h in heads:
        k = keys_src @ h.key.values
        q_all = queries_src @ h.query.values
        inv = 1.0 / np.sqrt(h.dim)
        for lo in range(0, n, block_rows):
            s = (q_all[lo:lo + block_rows] @ k.T) * total.dtype.type(inv)
            s -= s.max(axis=1, keepdims=True)
            e = np.exp(s)
            total[lo:lo + block_rows] += (e / e.sum(axis=1, keepdims=True)) @ values
    return total / len(heads) if len(heads) > 1 else total


@dataclass
class FusionParams:
    """Projections for both directions.

    ``graph_heads`` project the semantic table (query/key source for the
    semantically-enhanced structural output); ``kg_heads`` project the
    structural table.
    """

    graph_heads: list[Head]
    kg_heads: list[Head]

    @classmethod
    def init(cls, graph_dim: int, kg_dim: int, attn_dim: int, num_heads: int, rng: np.random.Generator,
             dtype=np.float32, requires_grad: bool = True, tied_init: bool = True) -> "FusionParams":
        return cls(
            graph_heads=make_heads(kg_dim, attn_dim, num_heads, rng, "attention.graph.", dtype, requires_grad,
                                   tied_init),
            kg_heads=make_heads(graph_dim, attn_dim, num_heads, rng, "attention.kg.", dtype, requires_grad,
                                tied_init),
        )

    def parameters(self) -> list[Tensor]:
        return [t for h in self.graph_heads + self.kg_heads for t in (h.query, h.key)]


def fuse(h_graph, h_kg, params: FusionParams, need_graph: bool = True, need_kg: bool = True):
    """Return ``(v_graph, v_kg)``: structural table enhanced by semantics, and vice versa."""
    h_graph, h_kg = Tensor._as(h_graph), Tensor._as(h_kg)
    v_graph = multi_head(h_kg, h_kg, h_graph, params.graph_heads) if need_graph else None
    v_kg = multi_head(h_graph, h_graph, h_kg, params.kg_heads) if need_kg else None
    return v_graph, v_kg
