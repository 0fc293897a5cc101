"""IR evaluation semantics, accounting, and weight-file round trips."""

import random
from fractions import Fraction

import pytest

from memcap.errors import DimensionMismatch
from memcap.ir import (
    RELU,
    AffineLayer,
    ReluMLP,
    UniformAttentionBlock,
    accounting,
    affine,
    eval_hardmax_column,
    eval_mlp,
    eval_transformer,
    eval_uniform_attention,
    mlp,
)
from memcap.numerics import Dyadic
from memcap.weights import model_from_json, model_to_json

D = Dyadic


def psi_gadget() -> ReluMLP:
    """sigma(sigma(2z) - sigma(4z - 2)), the triangle map as a 2-layer net."""
    l1 = affine([[D(2)], [D(4)]], [D(0), D(-2)], RELU)
    l2 = affine([[D(1), D(-1)]], [D(0)], RELU)
    return mlp([l1, l2])


def test_eval_identity_layer():
    net = mlp([affine([[D(1)]], [D(0)], RELU)])
    assert eval_mlp(net, [D(5, 1)]) == [Fraction(5, 2)]


def test_psi_gadget_values():
    net = psi_gadget()
    assert eval_mlp(net, [D(0)]) == [0]
    assert eval_mlp(net, [D(3, 2)]) == [Fraction(1, 2)]   # psi(3/4) = 1/2
    assert eval_mlp(net, [D(1, 2)]) == [Fraction(1, 2)]   # psi(1/4) = 1/2
    assert eval_mlp(net, [D(2)]) == [0]


def test_dimension_mismatch():
    net = mlp([affine([[D(1), D(0)]], [D(0)], RELU)])
    with pytest.raises(DimensionMismatch):
        eval_mlp(net, [D(1)])


def test_layer_shape_validation():
    with pytest.raises(DimensionMismatch):
        AffineLayer(((D(1),), (D(1), D(2))), (D(0), D(0)), RELU)
    with pytest.raises(DimensionMismatch):
        mlp([affine([[D(1)]], [D(0)]), affine([[D(1), D(1)]], [D(0)])])


def zero_block(m=3):
    return UniformAttentionBlock(tuple(tuple(D(0) for _ in range(m))
                                       for _ in range(m)))


def mean_writer_block():
    z, o = D(0), D(1)
    return UniformAttentionBlock(((z, z, z), (z, z, z), (o, z, z)))


def test_uniform_attention_zero_projection():
    cols = [[D(1), D(2), D(3)], [D(4), D(5), D(6)]]
    out = eval_uniform_attention(zero_block(), cols)
    assert out == [[1, 2, 3], [4, 5, 6]]


def test_uniform_attention_single_column():
    block = mean_writer_block()
    out = eval_uniform_attention(block, [[D(6), D(1), D(0)]])
    assert out == [[6, 1, 6]]


def test_uniform_attention_mean_in_third_row():
    block = mean_writer_block()
    cols = [[D(1), D(9), D(0)], [D(2), D(8), D(0)], [D(4), D(7), D(0)]]
    out = eval_uniform_attention(block, cols)
    mean = Fraction(1 + 2 + 4, 3)
    for col_in, col_out in zip(cols, out):
        assert col_out[0] == col_in[0].as_fraction()
        assert col_out[1] == col_in[1].as_fraction()
        assert col_out[2] == mean


def test_uniform_attention_equivariance():
    rng = random.Random(3)
    block = mean_writer_block()
    cols = [[D(rng.randint(-9, 9)) for _ in range(3)] for _ in range(5)]
    out = eval_uniform_attention(block, cols)
    perm = [3, 0, 4, 1, 2]
    out_perm = eval_uniform_attention(block, [cols[p] for p in perm])
    assert out_perm == [out[p] for p in perm]


def test_hardmax_column():
    assert eval_hardmax_column([D(3), D(1), D(2)]) == [1, 0, 0]
    assert eval_hardmax_column([D(2), D(2), D(1)]) == [Fraction(1, 2), Fraction(1, 2), 0]
    assert eval_hardmax_column([D(5)]) == [1]


def test_hardmax_is_probability_vector():
    rng = random.Random(11)
    for _ in range(50):
        col = [D(rng.randint(-5, 5), rng.randint(0, 3)) for _ in range(rng.randint(1, 7))]
        out = eval_hardmax_column(col)
        assert sum(out) == 1
        assert all(v >= 0 for v in out)


def test_accounting_empty_and_composed():
    empty = mlp([])
    rep = accounting(empty)
    assert rep.depth == 0 and rep.param_count == 0 and rep.width == 0
    stack = mlp([affine([[D(1)], [D(0)]], [D(0), D(0)]),
                 affine([[D(1), D(1)]], [D(0)])])
    rep = accounting(stack)
    assert rep.depth == 2 and rep.width == 2
    assert rep.param_count == (2 * 1 + 2) + (1 * 2 + 1)


def test_all_zero_transformer_outputs_zero():
    from memcap.ir import TransformerModel
    from memcap.transformer import _identity_layer
    z = D(0)
    ff1 = mlp([affine([[z, z]] * 3, [z] * 3)])
    ff2 = mlp([affine([[z, z, z]], [z])])
    model = TransformerModel(e_in=_identity_layer(2), ff1=ff1, ua=zero_block(),
                             ff2=ff2, e_out=_identity_layer(1))
    assert eval_transformer(model, [[D(3), D(-1)], [D(0), D(5)]]) == [0, 0]


def test_transformer_dimension_validation():
    from memcap.ir import TransformerModel
    from memcap.transformer import _identity_layer, build_attention
    z = D(0)
    with pytest.raises(DimensionMismatch):
        TransformerModel(e_in=_identity_layer(2),
                         ff1=mlp([affine([[z, z]] * 2, [z] * 2)]),   # d -> 2
                         ua=build_attention(),                       # expects 3
                         ff2=mlp([affine([[z, z, z]], [z])]),
                         e_out=_identity_layer(1))


def test_rational_json_helpers():
    from memcap.numerics import rational_from_json, rational_to_json
    q = Fraction(-355, 113)
    assert rational_from_json(rational_to_json(q)) == q


def test_determinism_and_serialization(small_model):
    model, ds = small_model
    seqs = ds.vector_sequences()
    first = eval_transformer(model, seqs[0])
    again = eval_transformer(model, seqs[0])
    assert first == again
    doc = model_to_json(model, header={"k": 1})
    clone = model_from_json(doc)
    assert model_to_json(clone, header={"k": 1}) == doc
    assert eval_transformer(clone, seqs[0]) == first


@pytest.fixture(scope="module")
def small_model():
    from memcap.dataset import gen_vector_dataset
    from memcap.transformer import synthesize_next_token
    ds = gen_vector_dataset(4, 3, 2, 3, seed=77)
    model, _ = synthesize_next_token(ds.vector_sequences(), list(ds.labels), seed=77)
    return model, ds
