"""Structural node embeddings: second-order biased walks plus Skip-gram.

The hot loops (walk sampling, negative-sampling SGD) are numba kernels that
consume random numbers pre-drawn from the caller's ``numpy.random.Generator``,
so a run is fully determined by the seed.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .graph import Graph

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class WalkConfig:
    p: float = 0.25
    q: float = 0.25
    walk_length: int = 80
    walks_per_node: int = 10
    window: int = 10
    dim: int = 128
    learning_rate: float = 0.025
    min_learning_rate: float = 1e-4
    negatives: int = 5
    epochs: int = 5
    seed: int = 0
    directed: bool = False
    sampler: str = "alias"
    workers: int = 1

    def __post_init__(self):
        if self.p <= 0 or self.q <= 0:
            raise ValueError("p and q must be positive")
        if self.walk_length < 1 or self.dim < 1:
            raise ValueError("walk_length and dim must be positive")
        if not 0 <= self.window <= self.walk_length:
            raise ValueError("window must lie in [0, walk_length]")
        if self.sampler not in ("alias", "direct"):
            raise ValueError(f"sampler must be 'alias' or 'direct', got {self.sampler!r}")
        if self.negatives < 0 or self.epochs < 0 or self.workers < 1:
            raise ValueError("negatives and epochs must be >= 0, workers >= 1")


@dataclass
class NodeEmbeddings:
    """Input vectors (the exported structural embedding) and context vectors."""

    vectors: np.ndarray
    context: np.ndarray

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def walk_adjacency(graph: Graph, directed: bool = False) -> tuple[np.ndarray, np.ndarray]:
    if directed:
        return graph.out_indptr, graph.out_indices
    return graph.undirected


def _is_neighbor(indptr, indices, a: int, b: int) -> bool:
    row = indices[indptr[a]:indptr[a + 1]]
    i = np.searchsorted(row, b)
    return bool(i < len(row) and row[i] == b)


def transition_weights(graph: Graph, prev: int | None, curr: int, config: WalkConfig) -> tuple[np.ndarray, np.ndarray]:
    """Next-step distribution from ``curr`` having arrived from ``prev``.

    Returns ``(neighbors, probabilities)``. Weight is 1/p for returning to
    ``prev``, 1 for a neighbor of ``prev`` and 1/q otherwise; the first step
    (``prev is None``) is uniform. An empty pair of arrays means a dead end.
    """
    indptr, indices = walk_adjacency(graph, config.directed)
    nbrs = indices[indptr[curr]:indptr[curr + 1]]
    if len(nbrs) == 0:
        return nbrs.copy(), np.zeros(0)
    if prev is None:
        return nbrs.copy(), np.full(len(nbrs), 1.0 / len(nbrs))
    weights = np.empty(len(nbrs))
    for k, x in enumerate(nbrs):
        if x == prev:
            weights[k] = 1.0 / config.p
        elif _is_neighbor(indptr, indices, prev, x):
            weights[k] = 1.0
        else:
            weights[k] = 1.0 / config.q
    return nbrs.copy(), weights / weights.sum()


# ---------------------------------------------------------------------------
# numba kernels


@njit(cache=True)
def _sorted_contains(indices, lo, hi, target):
    while lo < hi:
        mid = (lo + hi) // 2
        v = indices[mid]
        if v == target:
            return True
        if v < target:
            lo = mid + 1
        else:
            hi = mid
    return False


@njit(cache=True)
def _edge_weights(indptr, indices, prev, curr, inv_p, inv_q, out):
    lo, hi = indptr[curr], indptr[curr + 1]
    total = 0.0
    for k in range(hi - lo):
        x = indices[lo + k]
        if x == prev:
            w = inv_p
        elif _sorted_contains(indices, indptr[prev], indptr[prev + 1], x):
            w = 1.0
        else:
            w = inv_q
        out[k] = w
        total += w
    return total


@njit(cache=True)
def _build_alias_tables(indptr, indices, inv_p, inv_q, offsets, prob, alias):
    """Vose alias table for every directed edge (prev -> curr), laid out at offsets[e]."""
    n = len(indptr) - 1
    maxdeg = 0
    for v in range(n):
        maxdeg = max(maxdeg, indptr[v + 1] - indptr[v])
    w = np.empty(maxdeg)
    small = np.empty(maxdeg, dtype=np.int64)
    large = np.empty(maxdeg, dtype=np.int64)
    for prev in range(n):
        for e in range(indptr[prev], indptr[prev + 1]):
            curr = indices[e]
            deg = indptr[curr + 1] - indptr[curr]
            if deg == 0:
                continue
            total = _edge_weights(indptr, indices, prev, curr, inv_p, inv_q, w)
            base = offsets[e]
            ns = 0
            nl = 0
            for k in range(deg):
                scaled = w[k] * deg / total
                prob[base + k] = scaled
                alias[base + k] = k
                if scaled < 1.0:
                    small[ns] = k
                    ns += 1
                else:
                    large[nl] = k
                    nl += 1
            while ns > 0 and nl > 0:
                ns -= 1
                s = small[ns]
                nl -= 1
                g = large[nl]
                alias[base + s] = g
                prob[base + g] = prob[base + g] + prob[base + s] - 1.0
                if prob[base + g] < 1.0:
                    small[ns] = g
                    ns += 1
                else:
                    large[nl] = g
                    nl += 1
            for k in range(nl):
                prob[base + large[k]] = 1.0
            for k in range(ns):
                prob[base + small[k]] = 1.0


@njit(cache=True, nogil=True)
def _walk_kernel(starts, walk_length, indptr, indices, use_alias, offsets, prob, alias,
                 inv_p, inv_q, uniforms, out, lengths):
    maxdeg = 1
    for v in range(len(indptr) - 1):
        maxdeg = max(maxdeg, indptr[v + 1] - indptr[v])
    w = np.empty(maxdeg)
    for i in range(len(starts)):
        curr = starts[i]
        out[i, 0] = curr
        length = 1
        prev = -1
        edge = -1
        for step in range(1, walk_length):
            lo = indptr[curr]
            deg = indptr[curr + 1] - lo
            if deg == 0:
                break
            u = uniforms[i, step - 1]
            if prev < 0:
                k = min(int(u * deg), deg - 1)
            elif use_alias:
                scaled = u * deg
                k = min(int(scaled), deg - 1)
                if scaled - k >= prob[offsets[edge] + k]:
                    k = alias[offsets[edge] + k]
            else:
                total = _edge_weights(indptr, indices, prev, curr, inv_p, inv_q, w)
                target = u * total
                acc = 0.0
                k = deg - 1
                for j in range(deg):
                    acc += w[j]
                    if target < acc:
                        k = j
                        break
            edge = lo + k
            prev = curr
            curr = indices[edge]
            out[i, length] = curr
            length += 1
        lengths[i] = length


@njit(cache=True)
def _sigmoid(x):
    if x > 20.0:
        return 1.0
    if x < -20.0:
        return 0.0
    return 1.0 / (1.0 + np.exp(-x))


@njit(cache=True, fastmath=True)
def _sgns_pair(w_in, w_out, center, context, negatives, lr, grad_in):
    dim = w_in.shape[1]
    v = w_in[center]
    grad_in[:] = 0.0
    for t in range(len(negatives) + 1):
        if t == 0:
            target = context
            label = 1.0
        else:
            target = negatives[t - 1]
            if target == context:
                continue
            label = 0.0
        u = w_out[target]
        dot = 0.0
        for j in range(dim):
            dot += v[j] * u[j]
        g = (label - _sigmoid(dot)) * lr
        for j in range(dim):
            grad_in[j] += g * u[j]
            u[j] += g * v[j]
    for j in range(dim):
        v[j] += grad_in[j]


@njit(cache=True, fastmath=True)
def _sgns_chunk(walks, lengths, window, w_in, w_out, negatives, lr_start, lr_step):
    """One pass of negative-sampling SGD over a chunk of walks.

    ``negatives`` holds k pre-drawn node ids per (center, context) pair in
    visiting order; the learning rate falls by ``lr_step`` after every pair.
    """
    grad_in = np.empty(w_in.shape[1], dtype=w_in.dtype)
    pair = 0
    lr = lr_start
    for i in range(walks.shape[0]):
        L = lengths[i]
        for pos in range(L):
            center = walks[i, pos]
            lo = max(0, pos - window)
            hi = min(L, pos + window + 1)
            for cpos in range(lo, hi):
                if cpos == pos:
                    continue
                _sgns_pair(w_in, w_out, center, walks[i, cpos], negatives[pair], lr, grad_in)
                pair += 1
                lr -= lr_step
    return pair


# ---------------------------------------------------------------------------


def _alias_layout(indptr, indices):
    degrees = np.diff(indptr)
    sizes = degrees[indices]
    offsets = np.zeros(len(indices) + 1, dtype=np.int64)
    np.cumsum(sizes, out=offsets[1:])
    return offsets


def build_alias_tables(graph: Graph, config: WalkConfig):
    """Per-edge alias tables: ``(offsets, prob, alias)`` in CSR edge order."""
    indptr, indices = walk_adjacency(graph, config.directed)
    offsets = _alias_layout(indptr, indices)
    prob = np.zeros(offsets[-1])
    alias = np.zeros(offsets[-1], dtype=np.int64)
    if len(indices):
        _build_alias_tables(indptr, indices, 1.0 / config.p, 1.0 / config.q, offsets, prob, alias)
    return offsets, prob, alias


def alias_distribution(prob: np.ndarray, alias: np.ndarray) -> np.ndarray:
    """Exact distribution encoded by one alias table."""
    n = len(prob)
    dist = prob / n
    np.add.at(dist, alias, (1.0 - prob) / n)
    return dist


def generate_walks(graph: Graph, config: WalkConfig, rng: np.random.Generator) -> list[np.ndarray]:
    """``walks_per_node`` rounds of walks from every node, start order shuffled each round.

    With ``config.workers > 1`` the starts of each round are cut into that many
    contiguous blocks, each sampled with its own child stream of ``rng``.
    """
    indptr, indices = walk_adjacency(graph, config.directed)
    indptr = np.ascontiguousarray(indptr)
    indices = np.ascontiguousarray(indices)
    use_alias = config.sampler == "alias"
    if use_alias:
        offsets, prob, alias = build_alias_tables(graph, config)
    else:
        offsets = np.zeros(1, dtype=np.int64)
        prob = np.zeros(1)
        alias = np.zeros(1, dtype=np.int64)

    n = graph.num_nodes
    L = config.walk_length
    walks: list[np.ndarray] = []
    streams = rng.spawn(config.workers) if config.workers > 1 else [rng]

    def run(starts, stream):
        uniforms = stream.random((len(starts), max(L - 1, 1)))
        out = np.zeros((len(starts), L), dtype=np.int64)
        lengths = np.zeros(len(starts), dtype=np.int64)
        _walk_kernel(starts, L, indptr, indices, use_alias, offsets, prob, alias,
                     1.0 / config.p, 1.0 / config.q, uniforms, out, lengths)
        return [out[i, :lengths[i]].copy() for i in range(len(starts))]

    pool = ThreadPoolExecutor(config.workers) if config.workers > 1 else None
    try:
        for _ in range(config.walks_per_node):
            starts = rng.permutation(n).astype(np.int64)
            if pool is None:
                walks.extend(run(starts, rng))
            else:
                blocks = np.array_split(starts, config.workers)
                for part in pool.map(run, blocks, streams):
                    walks.extend(part)
    finally:
        if pool is not None:
            pool.shutdown()
    return walks


def _pack(walks) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.array([len(w) for w in walks], dtype=np.int64)
    out = np.zeros((len(walks), int(lengths.max()) if len(walks) else 0), dtype=np.int64)
    for i, w in enumerate(walks):
        out[i, :len(w)] = w
    return out, lengths


def _pair_counts(lengths: np.ndarray, window: int) -> np.ndarray:
    """Number of (center, context) pairs each walk contributes."""
    counts = np.zeros(len(lengths), dtype=np.int64)
    for i, L in enumerate(lengths):
        pos = np.arange(L)
        counts[i] = int((np.minimum(L - 1, pos + window) - np.maximum(0, pos - window)).sum())
    return counts


def noise_table(distribution: np.ndarray, size: int) -> np.ndarray:
    """Lookup table in which node i fills ~distribution[i] * size slots (word2vec style)."""
    bounds = np.rint(np.cumsum(distribution) * size).astype(np.int64)
    bounds[-1] = size
    counts = np.diff(np.concatenate([[0], bounds]))
    return np.repeat(np.arange(len(distribution), dtype=np.int64), counts)


def noise_distribution(walks, num_nodes: int, power: float = 0.75) -> np.ndarray:
    counts = np.zeros(num_nodes)
    for w in walks:
        counts += np.bincount(w, minlength=num_nodes)
    weights = counts**power
    total = weights.sum()
    return weights / total if total > 0 else np.full(num_nodes, 1.0 / num_nodes)


def init_embeddings(num_nodes: int, dim: int, rng: np.random.Generator) -> NodeEmbeddings:
    vectors = ((rng.random((num_nodes, dim)) - 0.5) / dim).astype(np.float32)
    return NodeEmbeddings(vectors=vectors, context=np.zeros((num_nodes, dim), dtype=np.float32))


def sgns_update(emb: NodeEmbeddings, center: int, context: int, negatives, lr: float) -> None:
    """Single negative-sampling SGD step on one (center, context) pair, in place."""
    negatives = np.asarray(negatives, dtype=np.int64)
    _sgns_pair(emb.vectors, emb.context, int(center), int(context), negatives, float(lr),
               np.empty(emb.dim, dtype=emb.vectors.dtype))


def skipgram_train(walks, num_nodes: int, config: WalkConfig, rng: np.random.Generator,
                   init: NodeEmbeddings | None = None, chunk_walks: int = 256) -> NodeEmbeddings:
    """Skip-gram with negative sampling over the walk corpus.

    Every node within ``config.window`` positions of a center is a context;
    each positive pair is contrasted with ``config.negatives`` nodes drawn
    from the unigram^0.75 distribution (via a lookup table). Vectors are
    float32. The learning rate decays linearly from
    ``learning_rate`` to ``min_learning_rate`` over all epochs.
    """
    if len(walks) == 0:
        raise ValueError("skipgram_train needs at least one walk")
    emb = init if init is not None else init_embeddings(num_nodes, config.dim, rng)
    if emb.vectors.shape != (num_nodes, config.dim) or emb.context.shape != emb.vectors.shape:
        raise ValueError(f"embedding shape {emb.vectors.shape} does not match ({num_nodes}, {config.dim})")
    packed, lengths = _pack(walks)
    per_walk = _pair_counts(lengths, config.window)
    total_pairs = int(per_walk.sum()) * config.epochs
    if total_pairs == 0:
        return emb
    table = noise_table(noise_distribution(walks, num_nodes), max(1_000_000, 100 * num_nodes))
    lr_step = (config.learning_rate - config.min_learning_rate) / total_pairs
    lr = config.learning_rate
    k = config.negatives
    for epoch in range(config.epochs):
        order = rng.permutation(len(walks))
        for lo in range(0, len(order), chunk_walks):
            idx = order[lo:lo + chunk_walks]
            n_pairs = int(per_walk[idx].sum())
            if n_pairs == 0:
                continue
            negs = table[rng.integers(0, len(table), size=(n_pairs, k))]
            _sgns_chunk(packed[idx], lengths[idx], config.window, emb.vectors, emb.context, negs, lr, lr_step)
            lr -= lr_step * n_pairs
        log.debug("skip-gram epoch %d done, lr=%.5f", epoch + 1, lr)
    return emb


def cooccurrence_counts(walks, num_nodes: int, window: int) -> np.ndarray:
    counts = np.zeros((num_nodes, num_nodes))
    for w in walks:
        w = np.asarray(w)
        for offset in range(1, window + 1):
            if offset >= len(w):
                break
            np.add.at(counts, (w[:-offset], w[offset:]), 1.0)
            np.add.at(counts, (w[offset:], w[:-offset]), 1.0)
    return counts


def skipgram_train_exact(walks, num_nodes: int, config: WalkConfig, rng: np.random.Generator,
                         steps: int = 500, lr: float = 0.05) -> NodeEmbeddings:
    """Full-softmax Skip-gram (exact partition function over all nodes).

    O(|V|^2) per step, so only for small graphs; used to cross-check the
    negative-sampling trainer. Full-batch Adam on the co-occurrence-weighted
    cross-entropy, built on the numkit tape.
    """
    from .numkit import Adam, Tensor, log_softmax_rows, matmul, mul, scale, sum_all, transpose

    counts = cooccurrence_counts(walks, num_nodes, config.window)
    total = counts.sum()
    if total == 0:
        raise ValueError("no co-occurring pairs; nothing to fit")
    weights = Tensor(counts / total)
    emb = init_embeddings(num_nodes, config.dim, rng)
    w_in = Tensor(emb.vectors, requires_grad=True, name="in")
    # zero context vectors would make every gradient of w_in vanish at step 0
    w_out = Tensor((rng.random((num_nodes, config.dim)) - 0.5) / config.dim, requires_grad=True, name="out")
    opt = Adam([w_in, w_out], lr=lr)
    for _ in range(steps):
        logits = matmul(w_in, transpose(w_out))
        loss = scale(sum_all(mul(weights, log_softmax_rows(logits))), -1.0)
        loss.backward()
        opt.step()
    return NodeEmbeddings(vectors=w_in.values, context=w_out.values)


def train_node2vec(graph: Graph, config: WalkConfig, rng: np.random.Generator | None = None) -> NodeEmbeddings:
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    walks = generate_walks(graph, config, rng)
    log.info("generated %d walks", len(walks))
    return skipgram_train(walks, graph.num_nodes, config, rng)
