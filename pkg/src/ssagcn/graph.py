"""Citation graphs: raw-file loading, random splits and the GCN propagation matrix."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np

from .numkit.sparse import SparseMatrix

log = logging.getLogger(__name__)


class DatasetError(ValueError):
    pass


class DatasetParseError(DatasetError):
    def __init__(self, path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


class DatasetValidationError(DatasetError):
    pass


def _csr(src: np.ndarray, dst: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    order = np.lexsort((dst, src))
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    return indptr, dst[order].astype(np.int64)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable directed citation graph (edges run citing -> cited).

    ``features`` may be None for a structure-only view (privacy runs load the
    graph without ever touching the feature matrix).
    """

    num_nodes: int
    out_indptr: np.ndarray
    out_indices: np.ndarray
    in_indptr: np.ndarray
    in_indices: np.ndarray
    labels: np.ndarray
    num_classes: int
    node_ids: tuple[str, ...]
    label_names: tuple[str, ...] = ()
    features: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_edges(cls, num_nodes: int, edges, labels, num_classes: int | None = None,
                   node_ids=None, label_names=(), features=None) -> "Graph":
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        labels = np.asarray(labels, dtype=np.int64).ravel()
        if num_nodes < 0 or labels.shape != (num_nodes,):
            raise DatasetValidationError(f"expected {num_nodes} labels, got {labels.shape[0]}")
        if num_classes is None:
            num_classes = int(labels.max()) + 1 if num_nodes else 0
        if num_nodes and (labels.min() < 0 or labels.max() >= num_classes):
            raise DatasetValidationError("label index outside [0, num_classes)")
        if len(edges) and (edges.min() < 0 or edges.max() >= num_nodes):
            raise DatasetValidationError("edge endpoint outside the node range")
        if np.any(edges[:, 0] == edges[:, 1]):
            raise DatasetValidationError("self-loops are not stored")
        if len(edges):
            edges = np.unique(edges, axis=0)
        if node_ids is None:
            node_ids = tuple(str(i) for i in range(num_nodes))
        node_ids = tuple(node_ids)
        if len(node_ids) != num_nodes:
            raise DatasetValidationError("node_ids length differs from num_nodes")
        if features is not None:
            features = np.asarray(features)
            if features.ndim != 2 or features.shape[0] != num_nodes:
                raise DatasetValidationError(f"feature matrix must have {num_nodes} rows")
            if not np.isin(features, (0, 1)).all():
                raise DatasetValidationError("features must be 0/1")
            features = _frozen(features.astype(np.uint8))
        out_indptr, out_indices = _csr(edges[:, 0], edges[:, 1], num_nodes)
        in_indptr, in_indices = _csr(edges[:, 1], edges[:, 0], num_nodes)
        return cls(
            num_nodes=int(num_nodes),
            out_indptr=_frozen(out_indptr),
            out_indices=_frozen(out_indices),
            in_indptr=_frozen(in_indptr),
            in_indices=_frozen(in_indices),
            labels=_frozen(labels.copy()),
            num_classes=int(num_classes),
            node_ids=node_ids,
            label_names=tuple(label_names),
            features=features,
        )

    @property
    def num_edges(self) -> int:
        return len(self.out_indices)

    @property
    def feature_dim(self) -> int:
        return 0 if self.features is None else self.features.shape[1]

    @cached_property
    def edges(self) -> np.ndarray:
        """(E, 2) array of (src, dst), sorted by src then dst."""
        src = np.repeat(np.arange(self.num_nodes), np.diff(self.out_indptr))
        return _frozen(np.stack([src, self.out_indices], axis=1))

    def successors(self, node: int) -> np.ndarray:
        return self.out_indices[self.out_indptr[node]:self.out_indptr[node + 1]]

    def predecessors(self, node: int) -> np.ndarray:
        return self.in_indices[self.in_indptr[node]:self.in_indptr[node + 1]]

    @cached_property
    def undirected(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR (indptr, indices) of the symmetrized graph, without self-loops."""
        e = self.edges
        both = np.concatenate([e, e[:, ::-1]]) if len(e) else e
        both = np.unique(both, axis=0) if len(both) else both
        indptr, indices = _csr(both[:, 0], both[:, 1], self.num_nodes)
        return _frozen(indptr), _frozen(indices)

    def neighbors(self, node: int) -> np.ndarray:
        indptr, indices = self.undirected
        return indices[indptr[node]:indptr[node + 1]]

    def without_features(self) -> "Graph":
        return replace(self, features=None)


@dataclass(frozen=True)
class SplitAssignment:
    train: np.ndarray
    dev: np.ndarray
    test: np.ndarray
    seed: int

    def __post_init__(self):
        for name in ("train", "dev", "test"):
            arr = np.asarray(getattr(self, name), dtype=np.int64)
            object.__setattr__(self, name, _frozen(arr))

    @property
    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.dev), len(self.test)

    def __eq__(self, other):
        if not isinstance(other, SplitAssignment):
            return NotImplemented
        return (self.seed == other.seed and np.array_equal(self.train, other.train)
                and np.array_equal(self.dev, other.dev) and np.array_equal(self.test, other.test))


def load_citation_dataset(content_path, cites_path) -> Graph:
    """Read a ``.content`` / ``.cites`` pair (Cora / CiteSeer raw layout).

    Content rows are ``node_id f_1 ... f_d label`` (tab separated); cites rows
    are ``cited_id citing_id``. Nodes keep content-file order, labels map to
    indices by sorted label name, and edges are stored citing -> cited.
    Citations that mention unknown IDs, self-citations and duplicates are
    dropped and counted in the log.
    """
    content_path, cites_path = Path(content_path), Path(cites_path)
    for p in (content_path, cites_path):
        if not p.is_file():
            raise FileNotFoundError(f"dataset file not found: {p}")

    node_ids: list[str] = []
    raw_labels: list[str] = []
    rows: list[np.ndarray] = []
    index: dict[str, int] = {}
    dim = None
    with content_path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 3:
                raise DatasetParseError(content_path, line_no, "expected node id, features and label")
            if dim is None:
                dim = len(parts) - 2
            elif len(parts) - 2 != dim:
                raise DatasetParseError(content_path, line_no, f"expected {dim} features, found {len(parts) - 2}")
            try:
                vec = np.array(parts[1:-1], dtype=np.int64)
            except ValueError:
                raise DatasetParseError(content_path, line_no, "non-integer feature value") from None
            if vec.min() < 0 or vec.max() > 1:
                raise DatasetValidationError(f"{content_path}:{line_no}: feature values must be 0 or 1")
            node_id = parts[0]
            if node_id in index:
                raise DatasetValidationError(f"{content_path}:{line_no}: duplicate node id {node_id!r}")
            index[node_id] = len(node_ids)
            node_ids.append(node_id)
            raw_labels.append(parts[-1])
            rows.append(vec.astype(np.uint8))
    if not node_ids:
        raise DatasetValidationError(f"{content_path}: no nodes")

    label_names = sorted(set(raw_labels))
    label_index = {name: i for i, name in enumerate(label_names)}
    labels = np.array([label_index[name] for name in raw_labels], dtype=np.int64)
    features = np.stack(rows)

    edges = []
    dangling = self_loops = 0
    with cites_path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise DatasetParseError(cites_path, line_no, "expected '<cited> <citing>'")
            cited, citing = parts
            if cited not in index or citing not in index:
                dangling += 1
                continue
            if cited == citing:
                self_loops += 1
                continue
            edges.append((index[citing], index[cited]))
    edge_arr = np.array(edges, dtype=np.int64).reshape(-1, 2)
    unique = np.unique(edge_arr, axis=0) if len(edge_arr) else edge_arr
    duplicates = len(edge_arr) - len(unique)
    if dangling or self_loops or duplicates:
        log.info("%s: dropped %d dangling citations, %d self-citations, %d duplicates",
                 cites_path.name, dangling, self_loops, duplicates)

    graph = Graph.from_edges(len(node_ids), unique, labels, len(label_names),
                             node_ids=node_ids, label_names=label_names, features=features)
    log.info("loaded %d nodes, %d edges, %d features, %d classes",
             graph.num_nodes, graph.num_edges, graph.feature_dim, graph.num_classes)
    return graph


def random_split(graph: Graph | int, seed: int) -> SplitAssignment:
    """Seeded uniform 8:1:1 split; the remainder after train is halved, odd node to test."""
    n = graph if isinstance(graph, int) else graph.num_nodes
    if n < 10:
        raise DatasetValidationError(f"need at least 10 nodes for a train/dev/test split, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(np.floor(0.8 * n))
    n_dev = (n - n_train) // 2
    return SplitAssignment(
        train=np.sort(perm[:n_train]),
        dev=np.sort(perm[n_train:n_train + n_dev]),
        test=np.sort(perm[n_train + n_dev:]),
        seed=int(seed),
    )


def save_split(split: SplitAssignment, path) -> None:
    lines = [f"seed {split.seed}"]
    for name in ("train", "dev", "test"):
        ids = getattr(split, name)
        lines.append(f"{name} {len(ids)}")
        lines.append(" ".join(map(str, ids.tolist())))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_split(path) -> SplitAssignment:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    try:
        seed = int(lines[0].split()[1])
        sections = {}
        for i in (1, 3, 5):
            name, count = lines[i].split()
            ids = np.array(lines[i + 1].split(), dtype=np.int64)
            if len(ids) != int(count):
                raise ValueError(f"{name}: expected {count} indices, found {len(ids)}")
            sections[name] = ids
        return SplitAssignment(sections["train"], sections["dev"], sections["test"], seed)
    except (IndexError, KeyError, ValueError) as exc:
        raise DatasetParseError(path, 0, f"malformed split file ({exc})") from None


def normalized_adjacency(graph: Graph) -> SparseMatrix:
    """Renormalized propagation matrix D^-1/2 (A_sym + I) D^-1/2 as CSR."""
    n = graph.num_nodes
    indptr, indices = graph.undirected
    rows = np.repeat(np.arange(n), np.diff(indptr))
    rows = np.concatenate([rows, np.arange(n)])
    cols = np.concatenate([indices, np.arange(n)])
    degree = np.bincount(rows, minlength=n).astype(np.float64)
    inv_sqrt = 1.0 / np.sqrt(degree)
    return SparseMatrix.from_coo(rows, cols, inv_sqrt[rows] * inv_sqrt[cols], (n, n))
