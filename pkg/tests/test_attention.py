import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssagcn.attention import (
    FusionParams,
    Head,
    attention_weights,
    blocked_attention,
    cross_attention,
    fuse,
    make_heads,
    multi_head,
)
from ssagcn.numkit import ShapeError, Tensor, grad_check_params, mul, sum_all


def T(x, grad=False, name=None):
    return Tensor(np.asarray(x, dtype=np.float64), requires_grad=grad, name=name)


def random_inputs(rng, n, dq=5, dv=3, da=4):
    return (rng.standard_normal((n, dq)), rng.standard_normal((n, dv)),
            T(rng.standard_normal((dq, da))), T(rng.standard_normal((dq, da))))


def test_single_node_identity(rng):
    src, vals, wq, wk = random_inputs(rng, 1)
    w = attention_weights(src, src, wq, wk).values
    assert w.tolist() == [[1.0]]
    assert np.array_equal(cross_attention(src, src, vals, wq, wk).values, vals)


def test_single_node_any_head_count(rng):
    src, vals, _, _ = random_inputs(rng, 1)
    heads = make_heads(5, 4, 3, rng, dtype=np.float64)
    assert np.allclose(multi_head(src, src, vals, heads).values, vals, atol=1e-15)


def test_identical_rows_give_half(rng):
    row = rng.standard_normal((1, 5))
    src = np.vstack([row, row])
    vals = np.array([[1.0, 2.0], [3.0, 6.0]])
    _, _, wq, wk = random_inputs(rng, 2)
    assert np.allclose(attention_weights(src, src, wq, wk).values, 0.5, atol=1e-15)
    assert np.allclose(cross_attention(src, src, vals, wq, wk).values, [[2.0, 4.0], [2.0, 4.0]])


def test_hand_set_scores():
    # W = s I with d_a = 2: scores are s^2 I / sqrt(2), so s^2 = 2 sqrt(2) gives [[2,0],[0,2]]
    src = np.eye(2)
    w = T(np.sqrt(2.0 * np.sqrt(2.0)) * np.eye(2))
    vals = np.array([[1.0, 0.0], [0.0, 10.0]])
    e2 = np.exp(2.0)
    expected_w = np.array([[e2, 1.0], [1.0, e2]]) / (e2 + 1)
    assert np.allclose(attention_weights(src, src, w, w).values, expected_w, atol=1e-14)
    assert np.allclose(cross_attention(src, src, vals, w, w).values, expected_w @ vals, atol=1e-13)


def test_row_mismatch():
    with pytest.raises(ShapeError):
        cross_attention(np.ones((3, 2)), np.ones((3, 2)), np.ones((4, 2)), T(np.ones((2, 2))), T(np.ones((2, 2))))


def test_one_head_is_cross_attention_bitwise(rng):
    src, vals, _, _ = random_inputs(rng, 6)
    heads = make_heads(5, 4, 1, np.random.default_rng(3), dtype=np.float64)
    a = multi_head(src, src, vals, heads).values
    b = cross_attention(src, src, vals, heads[0].query, heads[0].key).values
    assert np.array_equal(a, b)


def test_identical_heads_equal_single_head(rng):
    src, vals, wq, wk = random_inputs(rng, 7)
    single = cross_attention(src, src, vals, wq, wk).values
    many = multi_head(src, src, vals, [Head(wq, wk)] * 4).values
    assert np.allclose(single, many, atol=1e-14)


def test_output_width_independent_of_heads(rng):
    src, vals, _, _ = random_inputs(rng, 5)
    for h in (1, 2, 5):
        assert multi_head(src, src, vals, make_heads(5, 4, h, rng, dtype=np.float64)).shape == vals.shape


def test_tied_init_copies_query(rng):
    heads = make_heads(6, 3, 2, rng, tied_init=True)
    for h in heads:
        assert np.array_equal(h.query.values, h.key.values) and h.query is not h.key
    untied = make_heads(6, 3, 1, rng, tied_init=False)[0]
    assert not np.array_equal(untied.query.values, untied.key.values)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 12), seed=st.integers(0, 2**31), spread=st.floats(0.1, 20))
def test_rows_are_distributions(n, seed, spread):
    rng = np.random.default_rng(seed)
    src, _, wq, wk = random_inputs(rng, n)
    w = attention_weights(src * spread, src, wq, wk).values
    assert np.all(w >= 0)
    assert np.abs(w.sum(axis=1) - 1).max() <= 1e-6


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 10), seed=st.integers(0, 2**31))
def test_permutation_equivariance(n, seed):
    rng = np.random.default_rng(seed)
    h_g, h_kg = rng.standard_normal((n, 4)), rng.standard_normal((n, 6))
    params = FusionParams.init(4, 6, 3, 2, rng, dtype=np.float64)
    perm = rng.permutation(n)
    vg, vkg = fuse(h_g, h_kg, params)
    pg, pkg = fuse(h_g[perm], h_kg[perm], params)
    assert np.allclose(pg.values, vg.values[perm], atol=1e-12)
    assert np.allclose(pkg.values, vkg.values[perm], atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), c=st.floats(-100, 100))
def test_value_scale_linearity(seed, c):
    rng = np.random.default_rng(seed)
    src, vals, wq, wk = random_inputs(rng, 6)
    base = cross_attention(src, src, vals, wq, wk).values
    scaled = cross_attention(src, src, c * vals, wq, wk).values
    assert np.allclose(scaled, c * base, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("heads", [1, 3])
def test_gradient_check_into_projections(rng, heads):
    n = 8
    h_g, h_kg = rng.standard_normal((n, 4)), rng.standard_normal((n, 5))
    params = FusionParams.init(4, 5, 3, heads, rng, dtype=np.float64, tied_init=False)
    probe_g, probe_kg = T(rng.standard_normal((n, 4))), T(rng.standard_normal((n, 5)))

    def loss():
        vg, vkg = fuse(h_g, h_kg, params)
        return sum_all(mul(vg, probe_g)) + sum_all(mul(vkg, probe_kg))

    errs = grad_check_params(loss, params.parameters())
    assert len(errs) == 4 * heads
    assert max(errs.values()) < 1e-4


def test_fusion_shapes_and_names(rng):
    params = FusionParams.init(128, 200, 64, 2, rng)
    names = sorted(t.name for t in params.parameters())
    assert names[0] == "attention.graph.key0" and len(names) == 8
    # graph-side projections read the semantic table (200 wide), kg-side the structural one
    assert params.graph_heads[0].query.shape == (200, 64)
    assert params.kg_heads[0].query.shape == (128, 64)
    vg, vkg = fuse(rng.standard_normal((10, 128)), rng.standard_normal((10, 200)), params)
    assert vg.shape == (10, 128) and vkg.shape == (10, 200)


@pytest.mark.parametrize("block", [1, 3, 7, 64])
def test_blocked_matches_tape(rng, block):
    src, vals, _, _ = random_inputs(rng, 23)
    heads = make_heads(5, 4, 3, rng, dtype=np.float64, tied_init=False)
    tape = multi_head(src, src, vals, heads).values
    assert np.allclose(blocked_attention(src, src, vals, heads, block_rows=block), tape, rtol=1e-12, atol=1e-13)
