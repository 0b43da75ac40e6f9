"""Pipeline commands: prepare, embed, train, export, report.

Each command reads and writes plain files under ``config.output_dir`` so the
steps can be run (and re-run) independently from the CLI.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .embedding_io import read_embeddings, write_embeddings
from .graph import Graph, load_citation_dataset, load_split, normalized_adjacency, random_split, save_split
from .model import SSAGCN, ModelInputs, accuracy, standardize, train_model
from .node2vec import train_node2vec
from .numkit import ConfigError
from .transe import edges_to_triples, train_transe

log = logging.getLogger(__name__)


class ArtifactMissingError(FileNotFoundError):
    pass


@dataclass(frozen=True)
class Variant:
    name: str
    setting: str
    branches: tuple[str, ...]
    use_attention: bool


ALL = ("features", "graph_embed", "kg_embed")
VARIANTS = {
    v.name: v
    for v in (
        Variant("gcn", "-- Attention, KGE, GE", ("features",), False),
        Variant("ssa-gcn", "SSA-GCN", ALL, True),
        Variant("ssa-gcn-no-attention", "-- Attention", ALL, False),
        Variant("ssa-gcn-no-attention-kge", "-- Attention, KGE", ("features", "graph_embed"), False),
        Variant("privacy-ssa-gcn", "privacy-SSA-GCN", ("graph_embed", "kg_embed"), True),
        Variant("privacy-gcn+ge", "privacy-GCN + GE", ("graph_embed",), False),
        Variant("privacy-gcn+kge", "privacy-GCN + KGE", ("kg_embed",), False),
        Variant("privacy-gcn+kge+ge", "privacy-GCN + KGE + GE", ("graph_embed", "kg_embed"), False),
    )
}
ABLATION_LADDER = ("ssa-gcn", "ssa-gcn-no-attention", "ssa-gcn-no-attention-kge", "gcn")
VARIANT_CHOICES = tuple(VARIANTS) + ("ablation",)


class Workspace:
    """Paths of every artifact the pipeline produces."""

    def __init__(self, root):
        self.root = Path(root)

    graph_dir = property(lambda self: self.root / "graph")
    graph_manifest = property(lambda self: self.graph_dir / "manifest.json")
    structure_file = property(lambda self: self.graph_dir / "structure.npz")
    features_file = property(lambda self: self.graph_dir / "features.npy")
    results_file = property(lambda self: self.root / "results.jsonl")
    embeddings_dir = property(lambda self: self.root / "embeddings")
    export_dir = property(lambda self: self.root / "export")

    def split_file(self, seed: int) -> Path:
        return self.root / "splits" / f"seed_{seed}.txt"

    def embedding_file(self, which: str) -> Path:
        return self.embeddings_dir / f"{which}.tsv"

    def checkpoint_dir(self, variant: str, seed: int) -> Path:
        return self.root / "checkpoints" / variant / f"seed_{seed}"

    def log_file(self, variant: str, seed: int) -> Path:
        return self.root / "logs" / variant / f"seed_{seed}.jsonl"


def _file_digest(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def run_seeds(config: ExperimentConfig) -> list[int]:
    return [config.base_seed + i for i in range(config.num_runs)]


def split_seed(config: ExperimentConfig, run_seed: int) -> int:
    return config.base_seed if config.fixed_split else run_seed


# ---------------------------------------------------------------------------
# prepare


def cmd_prepare(config: ExperimentConfig) -> dict:
    """Parse the raw dataset into a cache and write one split file per run seed.

    Returns the cache manifest plus ``cached: True`` when nothing had to be done.
    """
    ws = Workspace(config.output_dir)
    content, cites = Path(config.dataset.content), Path(config.dataset.cites)
    for p in (content, cites):
        if not p.is_file():
            raise FileNotFoundError(f"missing dataset file: {p}")
    source = {"content": _file_digest(content), "cites": _file_digest(cites), "name": config.dataset.name}
    fingerprint = hashlib.sha256(json.dumps(source, sort_keys=True).encode()).hexdigest()[:16]

    seeds = sorted({split_seed(config, s) for s in run_seeds(config)})
    manifest = None
    if ws.graph_manifest.is_file():
        manifest = json.loads(ws.graph_manifest.read_text())
        if manifest.get("fingerprint") != fingerprint:
            manifest = None
    if manifest is not None and all(ws.split_file(s).is_file() for s in seeds):
        log.info("graph cache %s is up to date", fingerprint)
        return {**manifest, "cached": True}

    if manifest is None:
        graph = load_citation_dataset(content, cites)
        ws.graph_dir.mkdir(parents=True, exist_ok=True)
        np.savez(ws.structure_file, num_nodes=graph.num_nodes, edges=graph.edges, labels=graph.labels,
                 num_classes=graph.num_classes, node_ids=np.array(graph.node_ids),
                 label_names=np.array(graph.label_names))
        np.save(ws.features_file, graph.features)
        manifest = {
            "fingerprint": fingerprint,
            "dataset": config.dataset.name,
            "num_nodes": graph.num_nodes,
            "num_edges": graph.num_edges,
            "num_classes": graph.num_classes,
            "feature_dim": graph.feature_dim,
        }
        ws.graph_manifest.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    num_nodes = manifest["num_nodes"]
    for s in seeds:
        path = ws.split_file(s)
        if not path.is_file():
            path.parent.mkdir(parents=True, exist_ok=True)
            save_split(random_split(num_nodes, s), path)
    log.info("prepared %s: %d nodes, %d edges, %d classes", config.dataset.name, manifest["num_nodes"],
             manifest["num_edges"], manifest["num_classes"])
    return {**manifest, "cached": False}


def load_prepared_graph(config: ExperimentConfig, with_features: bool = True) -> Graph:
    """Load the cached graph; with ``with_features=False`` the feature file is never opened."""
    ws = Workspace(config.output_dir)
    if not ws.structure_file.is_file():
        raise ArtifactMissingError(f"no prepared graph under {ws.graph_dir}; run `ssagcn prepare` first")
    with np.load(ws.structure_file, allow_pickle=False) as z:
        num_nodes = int(z["num_nodes"])
        edges, labels = z["edges"], z["labels"]
        num_classes = int(z["num_classes"])
        node_ids = [str(x) for x in z["node_ids"]]
        label_names = [str(x) for x in z["label_names"]]
    features = None
    if with_features:
        if not ws.features_file.is_file():
            raise ArtifactMissingError(f"feature matrix {ws.features_file} missing; run `ssagcn prepare` first")
        features = np.load(ws.features_file, allow_pickle=False)
    return Graph.from_edges(num_nodes, edges, labels, num_classes, node_ids=node_ids,
                            label_names=label_names, features=features)


# ---------------------------------------------------------------------------
# embed


def cmd_embed(config: ExperimentConfig, which: str) -> Path:
    """Train node2vec (``structure``) or TransE (``semantic``) and write the TSV table."""
    if which not in ("structure", "semantic"):
        raise ConfigError("which must be 'structure' or 'semantic'")
    ws = Workspace(config.output_dir)
    graph = load_prepared_graph(config, with_features=False)
    rng = np.random.default_rng(config.base_seed)
    start = time.perf_counter()
    if which == "structure":
        emb = train_node2vec(graph, config.walk, rng)
        table = emb.vectors
    else:
        triples = edges_to_triples(graph, config.kge.both_directions)
        kge = train_transe(triples, config.kge, rng)
        table = kge.entities
        write_embeddings(ws.embeddings_dir / "semantic.relations.tsv", ["cites"], kge.relations)
    out = ws.embedding_file(which)
    write_embeddings(out, graph.node_ids, table)
    log.info("%s embeddings %s written to %s in %.1fs", which, table.shape, out, time.perf_counter() - start)
    return out


def load_embedding(config: ExperimentConfig, which: str, graph: Graph) -> np.ndarray:
    ws = Workspace(config.output_dir)
    path = ws.embedding_file(which)
    if not path.is_file():
        raise ArtifactMissingError(f"{which} embeddings not found at {path}; run `ssagcn embed --which {which}` first")
    ids, table = read_embeddings(path)
    if ids != list(graph.node_ids):
        raise ArtifactMissingError(f"{path} rows do not match the prepared graph; re-run `ssagcn embed --which {which}`")
    return table


# ---------------------------------------------------------------------------
# train


def _inputs_for(config: ExperimentConfig, variant: Variant, graph: Graph) -> ModelInputs:
    needs_graph = "graph_embed" in variant.branches or variant.use_attention
    needs_kg = "kg_embed" in variant.branches or variant.use_attention

    def table(which):
        t = load_embedding(config, which, graph)
        return standardize(t) if config.model.standardize_embeddings else t

    return ModelInputs(
        features=graph.features if "features" in variant.branches else None,
        graph_embed=table("structure") if needs_graph else None,
        kg_embed=table("semantic") if needs_kg else None,
    )


def _mean_std(values) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std(ddof=1)) if len(arr) > 1 else 0.0


def train_variant(config: ExperimentConfig, variant_name: str) -> dict:
    variant = VARIANTS[variant_name]
    ws = Workspace(config.output_dir)
    timings = {}
    t0 = time.perf_counter()
    graph = load_prepared_graph(config, with_features="features" in variant.branches)
    inputs = _inputs_for(config, variant, graph)
    adj = normalized_adjacency(graph)
    timings["load"] = time.perf_counter() - t0

    runs = []
    t0 = time.perf_counter()
    for seed in run_seeds(config):
        split_path = ws.split_file(split_seed(config, seed))
        if not split_path.is_file():
            raise ArtifactMissingError(f"split file {split_path} missing; run `ssagcn prepare` with the same --seed/--runs")
        split = load_split(split_path)
        rng = np.random.default_rng(seed)
        model_cfg = config.model_config(variant.branches, variant.use_attention, seed)
        model = SSAGCN.for_inputs(model_cfg, graph.num_classes, inputs, rng)
        result = train_model(model, adj, inputs, graph.labels, split, rng)
        logits = model.forward(adj, inputs, training=False).values
        run = {
            "seed": seed,
            "dev_acc": accuracy(logits, graph.labels, split.dev),
            "test_acc": accuracy(logits, graph.labels, split.test),
            "best_epoch": result.best_epoch,
            "epochs": len(result.history),
        }
        runs.append(run)
        model.save(ws.checkpoint_dir(variant.name, seed))
        log_path = ws.log_file(variant.name, seed)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        log_path.write_text("".join(json.dumps(asdict(r)) + "\n" for r in result.history))
        log.info("%s seed %d: dev %.4f test %.4f (best epoch %d)", variant.name, seed, run["dev_acc"],
                 run["test_acc"], result.best_epoch)
    timings["train"] = time.perf_counter() - t0

    dev_mean, dev_std = _mean_std([r["dev_acc"] for r in runs])
    test_mean, test_std = _mean_std([r["test_acc"] for r in runs])
    return {
        "variant": variant.name,
        "setting": variant.setting,
        "dataset": config.dataset.name,
        "fingerprint": config.fingerprint(),
        "base_seed": config.base_seed,
        "num_runs": config.num_runs,
        "runs": runs,
        "dev_mean": dev_mean,
        "dev_std": dev_std,
        "test_mean": test_mean,
        "test_std": test_std,
        "timings": timings,
    }


def cmd_train(config: ExperimentConfig, variant: str) -> list[dict]:
    """Train ``variant`` (or every rung of the ablation ladder) and append result records."""
    if variant not in VARIANT_CHOICES:
        raise ConfigError(f"unknown variant {variant!r}; choose from {', '.join(VARIANT_CHOICES)}")
    names = ABLATION_LADDER if variant == "ablation" else (variant,)
    ws = Workspace(config.output_dir)
    records = []
    for name in names:
        record = train_variant(config, name)
        records.append(record)
        ws.root.mkdir(parents=True, exist_ok=True)
        with ws.results_file.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    return records


# ---------------------------------------------------------------------------
# export / report


def cmd_export(config: ExperimentConfig) -> list[Path]:
    """Labelled TSVs of both embedding tables and of their fused versions, for external plotting.

    Fused tables use the ``ssa-gcn`` checkpoint of the first run when present,
    otherwise seeded, untrained projections (logged).
    """
    ws = Workspace(config.output_dir)
    graph = load_prepared_graph(config, with_features=False)
    written = []
    tables = {}
    for which in ("structure", "semantic"):
        path = ws.embedding_file(which)
        if path.is_file():
            tables[which] = load_embedding(config, which, graph)
            out = ws.export_dir / f"{which}.labeled.tsv"
            write_embeddings(out, graph.node_ids, tables[which], labels=graph.labels)
            written.append(out)
    if len(tables) == 2:
        if config.model.standardize_embeddings:
            inputs = ModelInputs(graph_embed=standardize(tables["structure"]), kg_embed=standardize(tables["semantic"]))
        else:
            inputs = ModelInputs(graph_embed=tables["structure"], kg_embed=tables["semantic"])
        ckpt = ws.checkpoint_dir("ssa-gcn", config.base_seed)
        if (ckpt / "manifest.json").is_file():
            model = SSAGCN.load(ckpt)
        else:
            log.info("no trained ssa-gcn checkpoint at %s; fusing with untrained projections", ckpt)
            # only the attention projections are used, so the features branch is left out
            model_cfg = config.model_config(("graph_embed", "kg_embed"), True, config.base_seed)
            model = SSAGCN.for_inputs(model_cfg, graph.num_classes, inputs, np.random.default_rng(config.base_seed))
        v_graph, v_kg = model.fused_embeddings(inputs)
        for name, table in (("fused_structure", v_graph), ("fused_semantic", v_kg)):
            out = ws.export_dir / f"{name}.labeled.tsv"
            write_embeddings(out, graph.node_ids, table, labels=graph.labels)
            written.append(out)
    if not written:
        raise ArtifactMissingError("no embeddings to export; run `ssagcn embed` first")
    return written


def read_results(path) -> list[dict]:
    path = Path(path)
    if not path.is_file():
        raise ArtifactMissingError(f"no result records at {path}; run `ssagcn train` first")
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]


def build_report(records: list[dict]) -> tuple[str, dict]:
    """Text table and JSON summary, keyed by variant; the latest record per variant wins."""
    if not records:
        raise ArtifactMissingError("no result records to report")
    latest: dict[str, dict] = {}
    for rec in records:
        latest[rec["variant"]] = rec
    rows = []
    summary = {}
    for name in sorted(latest):
        rec = latest[name]
        dev = [r["dev_acc"] for r in rec["runs"]]
        test = [r["test_acc"] for r in rec["runs"]]
        dev_mean, dev_std = _mean_std(dev)
        test_mean, test_std = _mean_std(test)
        summary[name] = {
            "setting": rec.get("setting", name),
            "dataset": rec.get("dataset", ""),
            "num_runs": len(rec["runs"]),
            "dev_mean": dev_mean,
            "dev_std": dev_std,
            "test_mean": test_mean,
            "test_std": test_std,
            "fingerprint": rec.get("fingerprint", ""),
        }
        rows.append((name, rec.get("dataset", ""), str(len(rec["runs"])),
                     f"{100 * dev_mean:.2f} ± {100 * dev_std:.2f}", f"{100 * test_mean:.2f} ± {100 * test_std:.2f}"))
    header = ("variant", "dataset", "runs", "dev acc (%)", "test acc (%)")
    widths = [max(len(r[i]) for r in rows + [header]) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(header, widths)).rstrip(),
             "  ".join("-" * w for w in widths)]
    lines += ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    return "\n".join(lines) + "\n", summary


def cmd_report(config: ExperimentConfig) -> tuple[str, dict]:
    ws = Workspace(config.output_dir)
    text, summary = build_report(read_results(ws.results_file))
    (ws.root / "report.txt").write_text(text, encoding="utf-8")
    (ws.root / "report.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return text, summary
