"""Semantic node embeddings: citation edges as single-relation triples, trained with TransE."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .graph import Graph
from .numkit import Adagrad, NonFiniteError, Tensor

log = logging.getLogger(__name__)

CITES = 0


@dataclass(frozen=True)
class TripleSet:
    heads: np.ndarray
    relations: np.ndarray
    tails: np.ndarray
    num_entities: int
    num_relations: int = 1

    def __len__(self) -> int:
        return len(self.heads)

    def as_array(self) -> np.ndarray:
        return np.stack([self.heads, self.relations, self.tails], axis=1)


@dataclass(frozen=True)
class KGEConfig:
    dim: int = 200
    batch_size: int = 2000
    learning_rate: float = 1.0
    epochs: int = 2000
    margin: float = 1.0
    norm: str = "l2"
    seed: int = 0
    both_directions: bool = False
    filtered: bool = False

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if self.dim < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("dim and batch_size must be positive, epochs >= 0")
        if self.norm not in ("l1", "l2"):
            raise ValueError(f"norm must be 'l1' or 'l2', got {self.norm!r}")


@dataclass
class KGEmbeddings:
    entities: np.ndarray
    relations: np.ndarray
    epoch_losses: list[float] = field(default_factory=list)


def edges_to_triples(graph: Graph, both_directions: bool = False) -> TripleSet:
    """One (citing, cites, cited) triple per stored edge, optionally also the reverse."""
    e = graph.edges
    if both_directions and len(e):
        e = np.concatenate([e, e[:, ::-1]])
    return TripleSet(
        heads=e[:, 0].copy(),
        relations=np.full(len(e), CITES, dtype=np.int64),
        tails=e[:, 1].copy(),
        num_entities=graph.num_nodes,
    )


def _other_entity(original: np.ndarray, draws: np.ndarray) -> np.ndarray:
    # draws are uniform on [0, n-2]; skipping the original makes them uniform on the rest
    return draws + (draws >= original)


def corrupt(heads: np.ndarray, tails: np.ndarray, num_entities: int, rng: np.random.Generator):
    """Replace exactly one of head/tail per triple (coin flip) with a different random entity."""
    if num_entities < 2:
        raise ValueError("corruption needs at least two entities")
    heads = np.asarray(heads, dtype=np.int64)
    tails = np.asarray(tails, dtype=np.int64)
    flip_head = rng.random(len(heads)) < 0.5
    draws = rng.integers(0, num_entities - 1, size=len(heads))
    new_heads = np.where(flip_head, _other_entity(heads, draws), heads)
    new_tails = np.where(flip_head, tails, _other_entity(tails, draws))
    return new_heads, new_tails


def sample_negative(triple, num_entities: int, rng: np.random.Generator) -> tuple[int, int, int]:
    h, r, t = (int(x) for x in triple)
    nh, nt = corrupt(np.array([h]), np.array([t]), num_entities, rng)
    return int(nh[0]), r, int(nt[0])


def margin_loss(positive_distance, negative_distance, gamma: float):
    """Hinge max(0, gamma + d_pos - d_neg); works elementwise on arrays."""
    return np.maximum(0.0, gamma + np.asarray(positive_distance) - np.asarray(negative_distance))


def distance(ent: np.ndarray, rel: np.ndarray, h, r, t, norm: str = "l2") -> np.ndarray:
    diff = ent[h] + rel[r] - ent[t]
    if norm == "l1":
        return np.abs(diff).sum(axis=-1)
    return np.sqrt((diff * diff).sum(axis=-1))


def _distance_and_direction(ent, rel, h, r, t, norm):
    diff = ent[h] + rel[r] - ent[t]
    if norm == "l1":
        return np.abs(diff).sum(axis=1), np.sign(diff)
    d = np.sqrt((diff * diff).sum(axis=1))
    safe = np.where(d > 0, d, 1.0)
    return d, diff / safe[:, None]


def transe_loss_and_grads(ent, rel, pos, neg, gamma: float, norm: str = "l2"):
    """Summed hinge loss over paired positive/negative triples and its gradients.

    ``pos`` and ``neg`` are (B, 3) arrays of (head, relation, tail). Returns
    ``(loss, grad_entities, grad_relations)`` with dense gradient tables.
    """
    ph, pr, pt = pos[:, 0], pos[:, 1], pos[:, 2]
    nh, nr, nt = neg[:, 0], neg[:, 1], neg[:, 2]
    d_pos, u_pos = _distance_and_direction(ent, rel, ph, pr, pt, norm)
    d_neg, u_neg = _distance_and_direction(ent, rel, nh, nr, nt, norm)
    hinge = gamma + d_pos - d_neg
    active = (hinge > 0).astype(ent.dtype)[:, None]
    loss = float(np.maximum(hinge, 0.0).sum())

    gp = u_pos * active
    gn = u_neg * active
    grad_ent = np.zeros_like(ent)
    grad_rel = np.zeros_like(rel)
    np.add.at(grad_ent, ph, gp)
    np.add.at(grad_ent, pt, -gp)
    np.add.at(grad_ent, nh, -gn)
    np.add.at(grad_ent, nt, gn)
    np.add.at(grad_rel, pr, gp - gn)
    return loss, grad_ent, grad_rel


def init_tables(num_entities: int, num_relations: int, dim: int, rng: np.random.Generator):
    bound = 6.0 / np.sqrt(dim)
    ent = rng.uniform(-bound, bound, size=(num_entities, dim))
    rel = rng.uniform(-bound, bound, size=(num_relations, dim))
    # both tables start on the unit sphere; only entities are projected back during training
    ent /= np.linalg.norm(ent, axis=1, keepdims=True)
    rel /= np.linalg.norm(rel, axis=1, keepdims=True)
    return ent, rel


def _known_set(triples: TripleSet) -> set[tuple[int, int, int]]:
    return set(map(tuple, triples.as_array().tolist()))


def train_transe(triples: TripleSet, config: KGEConfig, rng: np.random.Generator | None = None,
                 on_step: Callable[[np.ndarray, np.ndarray], None] | None = None) -> KGEmbeddings:
    """Minibatch Adagrad on the margin ranking loss, one corruption per positive.

    Entity rows are projected back to the unit sphere after every step;
    relation rows are left free. ``on_step(entities, relations)`` is called
    after each projection.
    """
    if len(triples) == 0:
        raise ValueError("train_transe needs at least one triple")
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    ent_init, rel_init = init_tables(triples.num_entities, triples.num_relations, config.dim, rng)
    ent = Tensor(ent_init, requires_grad=True, name="entities")
    rel = Tensor(rel_init, requires_grad=True, name="relations")
    opt = Adagrad([ent, rel], lr=config.learning_rate)
    positives = triples.as_array()
    known = _known_set(triples) if config.filtered else None
    losses: list[float] = []

    for epoch in range(config.epochs):
        order = rng.permutation(len(positives))
        total = 0.0
        for lo in range(0, len(order), config.batch_size):
            pos = positives[order[lo:lo + config.batch_size]]
            nh, nt = corrupt(pos[:, 0], pos[:, 2], triples.num_entities, rng)
            if known is not None:
                nh, nt = _refilter(pos, nh, nt, known, triples.num_entities, rng)
            neg = np.stack([nh, pos[:, 1], nt], axis=1)
            loss, g_ent, g_rel = transe_loss_and_grads(ent.values, rel.values, pos, neg, config.margin, config.norm)
            if not np.isfinite(loss):
                raise NonFiniteError(f"TransE loss became {loss} at epoch {epoch}")
            total += loss
            ent.grad, rel.grad = g_ent, g_rel
            opt.step()
            ent.values /= np.linalg.norm(ent.values, axis=1, keepdims=True)
            if on_step is not None:
                on_step(ent.values, rel.values)
        losses.append(total / len(positives))
        if (epoch + 1) % 100 == 0:
            log.debug("TransE epoch %d mean loss %.4f", epoch + 1, losses[-1])
    return KGEmbeddings(entities=ent.values, relations=rel.values, epoch_losses=losses)


def _refilter(pos, nh, nt, known, n, rng, tries: int = 10):
    nh, nt = nh.copy(), nt.copy()
    for i in range(len(pos)):
        for _ in range(tries):
            if (int(nh[i]), int(pos[i, 1]), int(nt[i])) not in known:
                break
            h, _, t = sample_negative(pos[i], n, rng)
            nh[i], nt[i] = h, t
    return nh, nt


def rank_tails(emb: KGEmbeddings, head: int, relation: int, norm: str = "l2") -> np.ndarray:
    """Entity ids sorted by d(head + relation, entity), closest first."""
    n = emb.entities.shape[0]
    d = distance(emb.entities, emb.relations, np.full(n, head), np.full(n, relation), np.arange(n), norm)
    return np.argsort(d, kind="stable")
