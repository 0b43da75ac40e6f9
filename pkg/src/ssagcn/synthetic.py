"""Planted-partition citation graphs written in the raw ``.content`` / ``.cites`` layout.

Used by the test-suite and for trying the pipeline without the real datasets::

    python -m ssagcn.synthetic out/ --nodes 600 --classes 5
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np


def make_citation_graph(num_nodes: int = 300, num_classes: int = 4, feature_dim: int = 200,
                        avg_out_degree: float = 2.0, homophily: float = 0.8, words_per_doc: int = 15,
                        topic_strength: float = 0.6, seed: int = 0):
    """Return ``(labels, features, edges)`` with class-correlated edges and vocabulary.

    Each class owns a block of the vocabulary; a document draws ``topic_strength``
    of its words from its class block and the rest uniformly. Each node cites
    ~``avg_out_degree`` earlier-or-later nodes, a fraction ``homophily`` of them
    within its own class.
    """
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, num_classes, size=num_nodes)
    block = feature_dim // num_classes
    features = np.zeros((num_nodes, feature_dim), dtype=np.uint8)
    for i, c in enumerate(labels):
        n_topic = rng.binomial(words_per_doc, topic_strength)
        topic = rng.integers(c * block, (c + 1) * block, size=n_topic)
        other = rng.integers(0, feature_dim, size=words_per_doc - n_topic)
        features[i, topic] = 1
        features[i, other] = 1
    by_class = [np.flatnonzero(labels == c) for c in range(num_classes)]
    edges = set()
    for i in range(num_nodes):
        for _ in range(rng.poisson(avg_out_degree)):
            pool = by_class[labels[i]] if rng.random() < homophily else np.arange(num_nodes)
            j = int(rng.choice(pool))
            if j != i:
                edges.add((i, j))
    return labels, features, sorted(edges)


def write_citation_files(directory, name: str = "synth", **kwargs) -> tuple[Path, Path]:
    """Write ``<name>.content`` and ``<name>.cites``; node ids are ``p<index>``, labels ``class_<k>``."""
    labels, features, edges = make_citation_graph(**kwargs)
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    content = directory / f"{name}.content"
    cites = directory / f"{name}.cites"
    with content.open("w") as fh:
        for i, (row, y) in enumerate(zip(features, labels)):
            fh.write(f"p{i}\t" + "\t".join(map(str, row.tolist())) + f"\tclass_{y}\n")
    with cites.open("w") as fh:
        for citing, cited in edges:
            fh.write(f"p{cited}\tp{citing}\n")
    return content, cites


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("directory")
    ap.add_argument("--name", default="synth")
    ap.add_argument("--nodes", type=int, default=300)
    ap.add_argument("--classes", type=int, default=4)
    ap.add_argument("--features", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    content, cites = write_citation_files(args.directory, args.name, num_nodes=args.nodes,
                                          num_classes=args.classes, feature_dim=args.features, seed=args.seed)
    print(content)
    print(cites)


if __name__ == "__main__":
    main()
