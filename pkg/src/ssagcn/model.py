"""Multi-branch GCN classifier over raw features and the two fused embedding tables."""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .attention import FusionParams, blocked_attention, fuse, glorot
from .numkit import (
    ConfigError,
    NonFiniteError,
    SparseMatrix,
    Tensor,
    concat_cols,
    dropout,
    load_tensor,
    make_optimizer,
    matmul,
    nll_loss,
    relu,
    save_tensor,
    softmax_rows,
    spmm,
)
from .numkit.tensor import ShapeError

log = logging.getLogger(__name__)

BRANCHES = ("features", "graph_embed", "kg_embed")


class TrainingDivergedError(RuntimeError):
    def __init__(self, message: str, history: list):
        super().__init__(message)
        self.history = history


@dataclass(frozen=True)
class ModelConfig:
    hidden_dim: int = 32
    num_layers: int = 2
    dropout: float = 0.2
    learning_rate: float = 0.001
    optimizer: str = "adam"
    max_epochs: int = 300
    patience: int = 30
    branches: tuple[str, ...] = BRANCHES
    use_attention: bool = True
    attention_mode: str = "joint"
    attention_dim: int = 64
    num_heads: int = 1
    attention_tied_init: bool = True
    standardize_embeddings: bool = False
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        branches = tuple(self.branches)
        object.__setattr__(self, "branches", branches)
        if not branches:
            raise ConfigError("at least one branch must be active")
        unknown = set(branches) - set(BRANCHES)
        if unknown:
            raise ConfigError(f"unknown branches {sorted(unknown)}; choose from {BRANCHES}")
        if len(set(branches)) != len(branches):
            raise ConfigError("duplicate branch names")
        if self.num_layers < 1 or self.hidden_dim < 1:
            raise ConfigError("num_layers and hidden_dim must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.attention_mode not in ("joint", "offline"):
            raise ConfigError("attention_mode must be 'joint' or 'offline'")
        if self.max_epochs < 1 or self.patience < 0:
            raise ConfigError("max_epochs must be >= 1 and patience >= 0")

    @property
    def ordered_branches(self) -> tuple[str, ...]:
        return tuple(b for b in BRANCHES if b in self.branches)


@dataclass
class ModelInputs:
    """Node-level inputs; only those needed by the active branches must be set."""

    features: np.ndarray | None = None
    graph_embed: np.ndarray | None = None
    kg_embed: np.ndarray | None = None


def standardize(table: np.ndarray) -> np.ndarray:
    """Zero-mean, unit-variance columns (constant columns are only centred)."""
    table = np.asarray(table, dtype=np.float64)
    std = table.std(axis=0)
    return (table - table.mean(axis=0)) / np.where(std > 0, std, 1.0)


def gcn_layer(adj: SparseMatrix, h: Tensor, w: Tensor, activate: bool = True) -> Tensor:
    """sigma(A_hat h w); the dense product is taken first so the sparse one is narrow."""
    h, w = Tensor._as(h), Tensor._as(w)
    if adj.shape[1] != h.shape[0]:
        raise ShapeError(f"adjacency {adj.shape} does not match {h.shape[0]} node rows")
    out = spmm(adj, matmul(h, w))
    return relu(out) if activate else out


class GCNEncoder:
    def __init__(self, name: str, input_dim: int, hidden_dim: int, num_layers: int, rng, dtype=np.float32):
        dims = [input_dim] + [hidden_dim] * num_layers
        self.name = name
        self.weights = [
            Tensor(glorot(rng, d_in, d_out, dtype), requires_grad=True, name=f"{name}.w{i}")
            for i, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:]))
        ]

    def __call__(self, adj, x: Tensor, rate: float, training: bool, rng) -> Tensor:
        h = x
        for w in self.weights:
            h = dropout(h, rate, training, rng)
            h = gcn_layer(adj, h, w, activate=True)
        return h


class SSAGCN:
    """Per-branch GCN encoders, column concatenation, then a linear softmax head."""

    def __init__(self, config: ModelConfig, num_classes: int, input_dims: dict[str, int],
                 rng: np.random.Generator, attention_dims: tuple[int, int] | None = None):
        self.config = config
        self.num_classes = num_classes
        self.dtype = np.dtype(config.dtype)
        branches = config.ordered_branches
        missing = [b for b in branches if b not in input_dims]
        if missing:
            raise ConfigError(f"no input dimension given for active branches {missing}")
        self.input_dims = {b: int(input_dims[b]) for b in branches}
        self.encoders = {
            b: GCNEncoder(b, self.input_dims[b], config.hidden_dim, config.num_layers, rng, self.dtype)
            for b in branches
        }
        self.attention: FusionParams | None = None
        if config.use_attention:
            if attention_dims is None:
                raise ConfigError("attention needs both embedding tables (graph_dim, kg_dim)")
            graph_dim, kg_dim = attention_dims
            self.attention = FusionParams.init(graph_dim, kg_dim, config.attention_dim, config.num_heads, rng,
                                               self.dtype, requires_grad=config.attention_mode == "joint",
                                               tied_init=config.attention_tied_init)
        self.head = Tensor(glorot(rng, config.hidden_dim * len(branches), num_classes, self.dtype),
                           requires_grad=True, name="head.w")
        self._offline_cache: tuple | None = None

    @classmethod
    def for_inputs(cls, config: ModelConfig, num_classes: int, inputs: ModelInputs, rng) -> "SSAGCN":
        dims = {}
        for b in config.ordered_branches:
            arr = getattr(inputs, b)
            if arr is None:
                raise ConfigError(f"branch {b!r} is active but its input is missing")
            dims[b] = arr.shape[1]
        attention_dims = None
        if config.use_attention:
            if inputs.graph_embed is None or inputs.kg_embed is None:
                raise ConfigError("attention is enabled but an embedding table is missing")
            attention_dims = (inputs.graph_embed.shape[1], inputs.kg_embed.shape[1])
        return cls(config, num_classes, dims, rng, attention_dims)

    def named_parameters(self) -> dict[str, Tensor]:
        out = {}
        for enc in self.encoders.values():
            for w in enc.weights:
                out[w.name] = w
        if self.attention is not None:
            for t in self.attention.parameters():
                out[t.name] = t
        out[self.head.name] = self.head
        return out

    def parameters(self) -> list[Tensor]:
        return [t for t in self.named_parameters().values() if t.requires_grad]

    def _branch_inputs(self, inputs: ModelInputs) -> dict[str, Tensor]:
        branches = self.config.ordered_branches
        for b in branches:
            if getattr(inputs, b) is None:
                raise ConfigError(f"branch {b!r} is active but its input is missing")
        cast = {b: Tensor(np.asarray(getattr(inputs, b), dtype=self.dtype)) for b in branches}
        if self.attention is None:
            return cast
        need_g, need_kg = "graph_embed" in branches, "kg_embed" in branches
        if self.config.attention_mode == "offline":
            if self._offline_cache is None:
                v_g, v_kg = fuse(np.asarray(inputs.graph_embed, dtype=self.dtype),
                                 np.asarray(inputs.kg_embed, dtype=self.dtype),
                                 self.attention, need_g, need_kg)
                self._offline_cache = (v_g and v_g.detach(), v_kg and v_kg.detach())
            v_g, v_kg = self._offline_cache
        else:
            v_g, v_kg = fuse(np.asarray(inputs.graph_embed, dtype=self.dtype),
                             np.asarray(inputs.kg_embed, dtype=self.dtype),
                             self.attention, need_g, need_kg)
        if need_g:
            cast["graph_embed"] = v_g
        if need_kg:
            cast["kg_embed"] = v_kg
        return cast

    def forward(self, adj: SparseMatrix, inputs: ModelInputs, training: bool = False,
                rng: np.random.Generator | None = None) -> Tensor:
        """Logits, one row per node."""
        branch_in = self._branch_inputs(inputs)
        hidden = [self.encoders[b](adj, branch_in[b], self.config.dropout, training, rng)
                  for b in self.config.ordered_branches]
        return matmul(concat_cols(hidden), self.head)

    __call__ = forward

    def fused_embeddings(self, inputs: ModelInputs, block_rows: int = 512):
        """(V_graph, V_kg) as numpy arrays, evaluated without building a tape."""
        if self.attention is None:
            raise ConfigError("model was built without attention")
        g = np.asarray(inputs.graph_embed, dtype=self.dtype)
        kg = np.asarray(inputs.kg_embed, dtype=self.dtype)
        return (blocked_attention(kg, kg, g, self.attention.graph_heads, block_rows),
                blocked_attention(g, g, kg, self.attention.kg_heads, block_rows))

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.values.copy() for k, v in self.named_parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.named_parameters()
        if set(state) != set(params):
            raise ConfigError(f"checkpoint parameters {sorted(state)} do not match model {sorted(params)}")
        for k, t in params.items():
            arr = np.asarray(state[k], dtype=t.values.dtype)
            if arr.shape != t.shape:
                raise ShapeError(f"{k}: checkpoint shape {arr.shape} vs model {t.shape}")
            t.values[...] = arr
        self._offline_cache = None

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        shapes = {}
        for name, arr in self.state_dict().items():
            save_tensor(directory / f"{name}.nkt", arr)
            shapes[name] = list(arr.shape)
        manifest = {
            "config": asdict(self.config),
            "num_classes": self.num_classes,
            "input_dims": self.input_dims,
            "branches": list(self.config.ordered_branches),
            "parameters": shapes,
        }
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, directory) -> "SSAGCN":
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text())
        cfg = dict(manifest["config"])
        cfg["branches"] = tuple(cfg["branches"])
        config = ModelConfig(**cfg)
        attention_dims = None
        if config.use_attention:
            shapes = manifest["parameters"]
            attention_dims = (shapes["attention.kg.query0"][0], shapes["attention.graph.query0"][0])
        model = cls(config, manifest["num_classes"], manifest["input_dims"], np.random.default_rng(0), attention_dims)
        model.load_state_dict({name: load_tensor(directory / f"{name}.nkt") for name in manifest["parameters"]})
        return model


def predict(model: SSAGCN, adj: SparseMatrix, inputs: ModelInputs) -> np.ndarray:
    """Class probabilities in eval mode."""
    return softmax_rows(model.forward(adj, inputs, training=False)).values


def accuracy(logits: np.ndarray, labels, nodes) -> float:
    nodes = np.asarray(nodes, dtype=np.int64)
    if nodes.size == 0:
        raise ValueError("accuracy over an empty node set")
    # argmax returns the first maximum, so ties go to the lowest class index
    pred = np.argmax(np.asarray(logits)[nodes], axis=1)
    return float(np.mean(pred == np.asarray(labels)[nodes]))


def evaluate(model: SSAGCN, adj: SparseMatrix, inputs: ModelInputs, labels, nodes) -> float:
    return accuracy(model.forward(adj, inputs, training=False).values, labels, nodes)


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    train_acc: float
    dev_acc: float


@dataclass
class TrainResult:
    model: SSAGCN
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_dev_acc: float = 0.0


def train_model(model: SSAGCN, adj: SparseMatrix, inputs: ModelInputs, labels, split,
                rng: np.random.Generator) -> TrainResult:
    """Full-batch training on the train nodes with dev-accuracy model selection.

    Stops after ``max_epochs`` or once ``patience`` epochs pass without a
    strictly better dev accuracy; the best snapshot is restored before return.
    """
    cfg = model.config
    labels = np.asarray(labels, dtype=np.int64)
    opt = make_optimizer(cfg.optimizer, model.parameters(), cfg.learning_rate)
    result = TrainResult(model=model)
    best_state = model.state_dict()
    best_dev = -1.0
    since_best = 0
    for epoch in range(cfg.max_epochs):
        try:
            logits = model.forward(adj, inputs, training=True, rng=rng)
            loss = nll_loss(logits, labels, split.train)
        except NonFiniteError as exc:
            raise TrainingDivergedError(f"epoch {epoch}: {exc}", result.history) from exc
        loss.backward()
        opt.step()

        eval_logits = model.forward(adj, inputs, training=False).values
        if not np.all(np.isfinite(eval_logits)):
            raise TrainingDivergedError(f"epoch {epoch}: non-finite logits after update", result.history)
        rec = EpochRecord(epoch, loss.item(), accuracy(eval_logits, labels, split.train),
                          accuracy(eval_logits, labels, split.dev))
        result.history.append(rec)
        if rec.dev_acc > best_dev:
            best_dev, best_state, since_best = rec.dev_acc, model.state_dict(), 0
            result.best_epoch = epoch
        else:
            since_best += 1
        if since_best >= cfg.patience:
            break
    model.load_state_dict(best_state)
    result.best_dev_acc = best_dev
    return result


def clone(model: SSAGCN) -> SSAGCN:
    return copy.deepcopy(model)
