"""Graph node classification with node2vec + TransE embeddings fused by cross-attention into a GCN."""

__version__ = "0.1.0"
