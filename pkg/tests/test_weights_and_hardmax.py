"""Weight-file round trips for all model kinds; hardmax attention block."""

import json

import pytest

from memcap.dataset import gen_id_dataset, gen_multiset_family, gen_vector_dataset
from memcap.errors import SchemaError
from memcap.ir import (
    HardmaxAttentionBlock,
    eval_deepset,
    eval_embedding_transformer,
    eval_hardmax_attention,
    eval_uniform_attention,
)
from memcap.numerics import Dyadic
from memcap.transformer import build_attention, synthesize_deepset, synthesize_embedding
from memcap.verify import shatter_sweep, verify_memorization, write_shatter_csv
from memcap.weights import model_to_json, save_weights, load_weights

D = Dyadic


def test_deepset_weights_roundtrip(tmp_path):
    ds = gen_multiset_family(4, 3, 2, 3, seed=5)
    model, _ = synthesize_deepset([list(ms) for ms in ds.sequences],
                                  list(ds.labels), seed=5)
    path = tmp_path / "ds.json"
    save_weights(path, model, header={"variant": "deepset"})
    clone, header = load_weights(path)
    assert header["variant"] == "deepset"
    for ms, y in zip(ds.sequences, ds.labels):
        assert eval_deepset(clone, [list(t) for t in ms]) == y
    assert model_to_json(clone) == model_to_json(model)


def test_embedding_weights_roundtrip(tmp_path):
    ds = gen_id_dataset(5, 3, 6, 2, seed=6)
    model, _ = synthesize_embedding([list(s) for s in ds.sequences],
                                    list(ds.labels), 6, seed=6)
    path = tmp_path / "em.json"
    save_weights(path, model)
    clone, _ = load_weights(path)
    for seq, y in zip(ds.sequences, ds.labels):
        assert eval_embedding_transformer(clone, seq)[-1] == y


def test_verify_report_identical_after_roundtrip(tmp_path):
    ds = gen_vector_dataset(4, 3, 2, 2, seed=8)
    from memcap.transformer import synthesize_next_token
    model, _ = synthesize_next_token(ds.vector_sequences(), list(ds.labels), seed=8)
    before = verify_memorization(model, ds).to_json()
    path = tmp_path / "w.json"
    save_weights(path, model)
    clone, _ = load_weights(path)
    after = verify_memorization(clone, ds).to_json()
    assert before == after


def test_malformed_weight_file(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"schema_version": 1, "kind": "mystery"}))
    with pytest.raises(SchemaError):
        load_weights(path)
    path.write_text("not json at all")
    with pytest.raises(SchemaError):
        load_weights(path)


def test_hardmax_block_with_zero_scores_is_averaging():
    """Zero key/query matrices tie every score, so hardmax splits mass 1/n:
    the block must agree exactly with the uniform-attention block."""
    z, o = D(0), D(1)
    m = 3
    zero_mat = tuple(tuple(z for _ in range(m)) for _ in range(m))
    identity = tuple(tuple(o if i == j else z for j in range(m)) for i in range(m))
    proj = ((z, z, z), (z, z, z), (o, z, z))
    hard = HardmaxAttentionBlock(key=(zero_mat,), query=(zero_mat,),
                                 value=(identity,), proj=(proj,))
    cols = [[D(1), D(9), D(0)], [D(2), D(8), D(0)], [D(4), D(7), D(0)]]
    got = eval_hardmax_attention(hard, cols)
    want = eval_uniform_attention(build_attention(), cols)
    assert got == want


def test_shatter_csv(tmp_path):
    ds = gen_vector_dataset(2, 2, 2, 2, seed=4, distinct_tokens=True)
    summary = shatter_sweep(ds, seed=4)
    out = tmp_path / "shatter.csv"
    write_shatter_csv(summary, out)
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "N,labeling_index,params,depth,max_bits,ok"
    assert len(lines) == 1 + 4


def test_separating_function_json():
    from memcap.separation import Multiset, restriction_set, separating_function
    a, b = (D(0),), (D(1),)
    family = [Multiset.from_elements([a]), Multiset.from_elements([b])]
    fn = separating_function(family, restriction_set(family), seed=1)
    doc = fn.to_json()
    assert set(doc) == {"range_bound", "values"}
    assert len(doc["values"]) == len(fn.table)


def test_build_ff1_shape():
    from memcap.transformer import build_ff1
    ds = gen_vector_dataset(4, 3, 2, 2, seed=9)
    ff1 = build_ff1(ds.vector_sequences(), list(ds.labels))
    assert ff1.in_dim == 2 and ff1.out_dim == 3
    assert ff1.width == 14
    # channel 3 is identically zero
    from memcap.ir import eval_mlp
    for seq in ds.vector_sequences():
        for tok in seq:
            out = eval_mlp(ff1, list(tok))
            assert out[2] == 0
