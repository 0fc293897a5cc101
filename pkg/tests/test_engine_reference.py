"""The integer-scaled evaluator against a naive Fraction reference."""

import random
from fractions import Fraction

from hypothesis import given, settings
from hypothesis import strategies as st

from memcap.ir import (
    RELU,
    IDENTITY,
    UniformAttentionBlock,
    affine,
    eval_mlp,
    eval_uniform_attention,
    mlp,
)
from memcap.numerics import Dyadic


def naive_layer(layer, vec):
    out = []
    for row, b in zip(layer.weights, layer.bias):
        acc = sum(w.as_fraction() * x for w, x in zip(row, vec)) + b.as_fraction()
        if layer.activation == RELU and acc < 0:
            acc = Fraction(0)
        out.append(acc)
    return out


def naive_mlp(net, vec):
    vec = [Fraction(x) for x in vec]
    for layer in net.layers:
        vec = naive_layer(layer, vec)
    return vec


def naive_uniform_attention(block, cols):
    n = len(cols)
    m = block.m
    cols = [[Fraction(x) for x in c] for c in cols]
    mean = [sum(c[i] for c in cols) / n for i in range(m)]
    delta = [sum(block.proj_value_product[i][j].as_fraction() * mean[j]
                 for j in range(m)) for i in range(m)]
    return [[c[i] + delta[i] for i in range(m)] for c in cols]


small_dyadic = st.builds(Dyadic,
                         st.integers(min_value=-2**20, max_value=2**20),
                         st.integers(min_value=0, max_value=12))


@given(st.integers(min_value=0, max_value=10**9), st.data())
@settings(max_examples=120, deadline=None)
def test_random_mlp_matches_reference(seed, data):
    rng = random.Random(seed)
    dims = [rng.randint(1, 5) for _ in range(rng.randint(2, 5))]
    layers = []
    for d_in, d_out in zip(dims, dims[1:]):
        rows = [[Dyadic(rng.randint(-2**16, 2**16), rng.randint(0, 10))
                 for _ in range(d_in)] for _ in range(d_out)]
        bias = [Dyadic(rng.randint(-2**16, 2**16), rng.randint(0, 10))
                for _ in range(d_out)]
        layers.append(affine(rows, bias, rng.choice((RELU, IDENTITY))))
    net = mlp(layers)
    x = [Fraction(rng.randint(-999, 999), rng.choice((1, 2, 3, 5, 8, 12)))
         for _ in range(dims[0])]
    assert eval_mlp(net, x) == naive_mlp(net, x)


@given(st.integers(min_value=0, max_value=10**9))
@settings(max_examples=80, deadline=None)
def test_random_attention_matches_reference(seed):
    rng = random.Random(seed)
    m = rng.randint(1, 4)
    n = rng.randint(1, 6)
    proj = tuple(tuple(Dyadic(rng.randint(-9, 9), rng.randint(0, 4))
                       for _ in range(m)) for _ in range(m))
    block = UniformAttentionBlock(proj)
    cols = [[Fraction(rng.randint(-99, 99), rng.choice((1, 2, 3, 7)))
             for _ in range(m)] for _ in range(n)]
    assert eval_uniform_attention(block, cols) == naive_uniform_attention(block, cols)
