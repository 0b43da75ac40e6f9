"""Embedding tables as TSV: a ``<count> <dim>`` header, then ``node_id<TAB>v_1 ... v_dim``."""

from __future__ import annotations

from pathlib import Path

import numpy as np


class EmbeddingFormatError(ValueError):
    pass


def write_embeddings(path, node_ids, vectors, labels=None) -> None:
    """Write one row per node; with ``labels`` a header row names the columns and a label column is appended."""
    vectors = np.asarray(vectors)
    if vectors.ndim != 2 or vectors.shape[0] != len(node_ids):
        raise EmbeddingFormatError(f"{len(node_ids)} ids for a {vectors.shape} table")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n, d = vectors.shape
    with path.open("w", encoding="utf-8") as fh:
        if labels is None:
            fh.write(f"{n} {d}\n")
        else:
            cols = ["node_id"] + [f"v{i + 1}" for i in range(d)] + ["label"]
            fh.write("\t".join(cols) + "\n")
        for i, node in enumerate(node_ids):
            row = "\t".join(repr(float(x)) for x in vectors[i])
            if labels is None:
                fh.write(f"{node}\t{row}\n")
            else:
                fh.write(f"{node}\t{row}\t{int(labels[i])}\n")


def read_embeddings(path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        header = fh.readline().split()
        try:
            n, d = int(header[0]), int(header[1])
        except (IndexError, ValueError):
            raise EmbeddingFormatError(f"{path}: first line must be '<count> <dim>'") from None
        ids: list[str] = []
        out = np.empty((n, d))
        for line_no, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split("\t")
            if len(ids) >= n:
                raise EmbeddingFormatError(f"{path}:{line_no}: more rows than the header announces")
            if len(parts) != d + 1:
                raise EmbeddingFormatError(f"{path}:{line_no}: expected {d} values, found {len(parts) - 1}")
            out[len(ids)] = np.array(parts[1:], dtype=np.float64)
            ids.append(parts[0])
    if len(ids) != n:
        raise EmbeddingFormatError(f"{path}: header announces {n} rows, found {len(ids)}")
    return ids, out
