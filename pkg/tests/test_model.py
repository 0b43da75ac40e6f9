import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_graph, random_graph
from ssagcn.graph import SplitAssignment, normalized_adjacency
from ssagcn.model import (
    BRANCHES,
    SSAGCN,
    ModelConfig,
    ModelInputs,
    accuracy,
    evaluate,
    gcn_layer,
    predict,
    standardize,
    train_model,
)
from ssagcn.numkit import ConfigError, ShapeError, Tensor, grad_check_params, nll_loss


def small_problem(rng, n=8, f=6, dg=4, dkg=5, classes=3):
    g = random_graph(rng, n, 0.35, classes, feature_dim=f)
    inputs = ModelInputs(features=g.features.astype(np.float64), graph_embed=rng.standard_normal((n, dg)),
                         kg_embed=rng.standard_normal((n, dkg)))
    return g, normalized_adjacency(g), inputs


def build(inputs, classes=3, seed=0, **kw):
    cfg = ModelConfig(**{"dtype": "float64", "hidden_dim": 4, "attention_dim": 3, "seed": seed, **kw})
    return SSAGCN.for_inputs(cfg, classes, inputs, np.random.default_rng(seed))


# ---------------------------------------------------------------- layer

def test_gcn_layer_two_node_path():
    adj = normalized_adjacency(make_graph(2, [(0, 1)]))
    out = gcn_layer(adj, Tensor(np.eye(2)), Tensor(np.eye(2)))
    assert np.allclose(out.values, 0.5, atol=1e-15)


def test_gcn_layer_single_node():
    adj = normalized_adjacency(make_graph(1, []))
    assert gcn_layer(adj, Tensor([[2.5]]), Tensor([[1.0]])).values.tolist() == [[2.5]]


def test_gcn_layer_zero_weights(rng):
    g = random_graph(rng, 6, 0.4)
    out = gcn_layer(normalized_adjacency(g), Tensor(rng.standard_normal((6, 3))), Tensor(np.zeros((3, 2))))
    assert not out.values.any()


def test_gcn_layer_shape_errors(rng):
    adj = normalized_adjacency(random_graph(rng, 4, 0.5))
    with pytest.raises(ShapeError):
        gcn_layer(adj, Tensor(np.ones((5, 2))), Tensor(np.ones((2, 2))))
    with pytest.raises(ShapeError):
        gcn_layer(adj, Tensor(np.ones((4, 2))), Tensor(np.ones((3, 2))))


# ---------------------------------------------------------------- forward

def test_features_only_is_plain_gcn(rng):
    g, adj, inputs = small_problem(rng)
    model = build(inputs, branches=("features",), use_attention=False)
    w0, w1 = (w.values for w in model.encoders["features"].weights)
    a = adj.to_dense()
    relu = lambda x: np.maximum(x, 0)
    expected = relu(a @ relu(a @ inputs.features @ w0) @ w1) @ model.head.values
    assert np.allclose(model.forward(adj, inputs).values, expected, atol=1e-12)


BRANCH_SETS = [("features",), ("graph_embed",), ("kg_embed",), ("features", "graph_embed"),
               ("graph_embed", "kg_embed"), BRANCHES]


@pytest.mark.parametrize("branches,attention", [(b, a) for b in BRANCH_SETS for a in (False, True)
                                                 if not a or b != ("features",)])
def test_logit_shape(rng, branches, attention):
    g, adj, inputs = small_problem(rng)
    model = build(inputs, branches=branches, use_attention=attention)
    assert model.forward(adj, inputs).shape == (8, 3)
    assert model.head.shape == (4 * len(branches), 3)


def test_missing_input_is_config_error(rng):
    g, adj, inputs = small_problem(rng)
    model = build(inputs, use_attention=False)
    with pytest.raises(ConfigError):
        model.forward(adj, ModelInputs(features=inputs.features, graph_embed=inputs.graph_embed))


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(branches=())
    with pytest.raises(ConfigError):
        ModelConfig(branches=("pixels",))
    with pytest.raises(ConfigError):
        ModelConfig(num_layers=0)
    with pytest.raises(ConfigError):
        ModelConfig(dropout=1.0)


def test_branch_ablation_removes_only_its_block(rng):
    g, adj, inputs = small_problem(rng)
    full = build(inputs, use_attention=False).named_parameters()
    for drop in BRANCHES:
        kept = tuple(b for b in BRANCHES if b != drop)
        part = build(inputs, branches=kept, use_attention=False).named_parameters()
        removed = set(full) - set(part)
        assert removed == {k for k in full if k.startswith(drop + ".")}
        for k in part:
            if k != "head.w":
                assert part[k].shape == full[k].shape
        assert part["head.w"].shape == (4 * 2, 3)


def test_forward_pure_without_dropout(rng):
    g, adj, inputs = small_problem(rng)
    model = build(inputs)
    a = model.forward(adj, inputs, training=False).values
    b = model.forward(adj, inputs, training=False).values
    assert np.array_equal(a, b)


def test_softmax_rows_and_argmax_invariance(rng):
    g, adj, inputs = small_problem(rng)
    model = build(inputs)
    probs = predict(model, adj, inputs)
    assert np.abs(probs.sum(axis=1) - 1).max() <= 1e-6
    logits = model.forward(adj, inputs).values
    shifted = logits + rng.standard_normal((8, 1)) * 100
    assert np.array_equal(logits.argmax(axis=1), shifted.argmax(axis=1))


@pytest.mark.parametrize("mode", ["joint", "offline"])
def test_end_to_end_gradient_check(rng, mode):
    g, adj, inputs = small_problem(rng)
    model = build(inputs, attention_mode=mode, attention_tied_init=False, dropout=0.0)
    labels = g.labels
    params = model.parameters()

    def loss():
        model._offline_cache = None
        return nll_loss(model.forward(adj, inputs, training=True, rng=np.random.default_rng(0)), labels,
                        np.arange(8))

    errs = grad_check_params(loss, params)
    expected = {f"{b}.w{i}" for b in BRANCHES for i in range(2)} | {"head.w"}
    if mode == "joint":
        expected |= {f"attention.{s}.{k}0" for s in ("graph", "kg") for k in ("query", "key")}
    assert set(errs) == expected
    assert max(errs.values()) < 1e-4, errs


def test_offline_attention_is_frozen(rng):
    g, adj, inputs = small_problem(rng)
    model = build(inputs, attention_mode="offline")
    assert not any(k.startswith("attention") for k in (p.name for p in model.parameters()))
    assert any(k.startswith("attention") for k in model.named_parameters())


def test_fused_embeddings_match_tape(rng):
    g, adj, inputs = small_problem(rng)
    model = build(inputs, num_heads=2)
    from ssagcn.attention import fuse
    vg, vkg = fuse(inputs.graph_embed, inputs.kg_embed, model.attention)
    bg, bkg = model.fused_embeddings(inputs, block_rows=3)
    assert np.allclose(bg, vg.values, atol=1e-12) and np.allclose(bkg, vkg.values, atol=1e-12)


def test_standardize_columns(rng):
    x = rng.standard_normal((50, 4)) * [1, 5, 0, 2] + 3
    z = standardize(x)
    assert np.allclose(z.mean(axis=0), 0, atol=1e-12)
    assert np.allclose(z.std(axis=0), [1, 1, 0, 1], atol=1e-12)


# ---------------------------------------------------------------- evaluate

def test_accuracy_cases():
    logits = np.eye(4)
    assert accuracy(logits, [0, 1, 2, 3], range(4)) == 1.0
    assert accuracy(logits, [1, 2, 3, 0], range(4)) == 0.0
    assert accuracy(logits, [0, 1, 2, 0], range(4)) == 0.75
    with pytest.raises(ValueError):
        accuracy(logits, [0, 1, 2, 3], [])


def test_accuracy_ties_go_to_lowest_class():
    assert accuracy(np.array([[1.0, 1.0, 0.0]]), [0], [0]) == 1.0
    assert accuracy(np.array([[1.0, 1.0, 0.0]]), [1], [0]) == 0.0


# ---------------------------------------------------------------- training

def two_clusters():
    g = make_graph(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)],
                   labels=[0, 0, 0, 1, 1, 1], features=np.array([[1, 0, 1], [1, 0, 0], [1, 1, 0],
                                                                 [0, 1, 1], [0, 0, 1], [0, 1, 0]], dtype=np.uint8))
    rng = np.random.default_rng(0)
    inputs = ModelInputs(features=g.features, graph_embed=rng.standard_normal((6, 8)),
                         kg_embed=rng.standard_normal((6, 10)))
    everyone = np.arange(6)
    return g, normalized_adjacency(g), inputs, SplitAssignment(everyone, everyone, everyone, 0)


def test_overfit_six_node_graph():
    g, adj, inputs, split = two_clusters()
    cfg = ModelConfig(learning_rate=0.01, max_epochs=200, patience=200, dropout=0.0, hidden_dim=16,
                      attention_dim=8)
    model = SSAGCN.for_inputs(cfg, 2, inputs, np.random.default_rng(0))
    result = train_model(model, adj, inputs, g.labels, split, np.random.default_rng(1))
    assert len(result.history) == 200
    assert result.history[-1].train_acc == 1.0
    assert evaluate(model, adj, inputs, g.labels, split.train) == 1.0


def test_patience_zero_is_one_epoch():
    g, adj, inputs, split = two_clusters()
    model = SSAGCN.for_inputs(ModelConfig(patience=0), 2, inputs, np.random.default_rng(0))
    assert len(train_model(model, adj, inputs, g.labels, split, np.random.default_rng(1)).history) == 1


def test_training_deterministic():
    g, adj, inputs, split = two_clusters()

    def run():
        model = SSAGCN.for_inputs(ModelConfig(max_epochs=30, patience=30), 2, inputs, np.random.default_rng(4))
        res = train_model(model, adj, inputs, g.labels, split, np.random.default_rng(5))
        return res.history, model.state_dict()

    (h1, s1), (h2, s2) = run(), run()
    assert h1 == h2
    assert all(np.array_equal(s1[k], s2[k]) for k in s1)


def test_best_snapshot_restored():
    g, adj, inputs, split = two_clusters()
    model = SSAGCN.for_inputs(ModelConfig(max_epochs=40, patience=5, learning_rate=0.05), 2, inputs,
                              np.random.default_rng(0))
    res = train_model(model, adj, inputs, g.labels, split, np.random.default_rng(1))
    assert evaluate(model, adj, inputs, g.labels, split.dev) == res.best_dev_acc
    assert res.best_dev_acc == max(r.dev_acc for r in res.history)
    assert res.history[res.best_epoch].dev_acc == res.best_dev_acc


def test_first_step_lowers_loss():
    g, adj, inputs, split = two_clusters()
    model = SSAGCN.for_inputs(ModelConfig(max_epochs=2, patience=5, dropout=0.0), 2, inputs, np.random.default_rng(0))
    h = train_model(model, adj, inputs, g.labels, split, np.random.default_rng(1)).history
    assert h[1].loss < h[0].loss


def test_checkpoint_roundtrip(tmp_path):
    g, adj, inputs, _ = two_clusters()
    model = SSAGCN.for_inputs(ModelConfig(num_heads=2), 2, inputs, np.random.default_rng(0))
    model.save(tmp_path / "ckpt")
    back = SSAGCN.load(tmp_path / "ckpt")
    assert np.array_equal(back.forward(adj, inputs).values, model.forward(adj, inputs).values)
    assert back.config == model.config


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_dropout_changes_training_forward_only(seed):
    g, adj, inputs, _ = two_clusters()
    model = SSAGCN.for_inputs(ModelConfig(dropout=0.5), 2, inputs, np.random.default_rng(seed))
    ev = model.forward(adj, inputs).values
    tr = model.forward(adj, inputs, training=True, rng=np.random.default_rng(seed)).values
    assert np.array_equal(ev, model.forward(adj, inputs).values)
    assert tr.shape == ev.shape
