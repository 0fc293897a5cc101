"""Immutable network IR and the exact forward-pass evaluator.

Values flowing through a network are exact rationals.  Internally a vector
is carried as integer numerators over a shared scale 2**exp * den (den odd),
so affine layers reduce to integer dot products; the odd denominator only
ever appears downstream of the uniform-attention 1/n average and is divided
away as soon as it cancels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence
from weakref import WeakKeyDictionary

from .errors import DimensionMismatch
from .numerics import CertifiedReal, Dyadic

RELU = "relu"
IDENTITY = "identity"


@dataclass(frozen=True, eq=False)
class AffineLayer:
    weights: tuple[tuple[Dyadic, ...], ...]   # out_dim x in_dim
    bias: tuple[Dyadic, ...]
    activation: str = RELU

    def __post_init__(self):
        if self.activation not in (RELU, IDENTITY):
            raise DimensionMismatch(f"unknown activation {self.activation!r}")
        if len(self.weights) != len(self.bias):
            raise DimensionMismatch("bias length does not match weight rows")
        widths = {len(row) for row in self.weights}
        if len(widths) > 1:
            raise DimensionMismatch("ragged weight matrix")

    @property
    def out_dim(self) -> int:
        return len(self.weights)

    @property
    def in_dim(self) -> int:
        return len(self.weights[0]) if self.weights else 0

    def param_count(self) -> int:
        return self.out_dim * self.in_dim + self.out_dim

    def iter_params(self) -> Iterable[Dyadic]:
        for row in self.weights:
            yield from row
        yield from self.bias


def affine(rows: Sequence[Sequence[Dyadic]], bias: Sequence[Dyadic],
           activation: str = RELU) -> AffineLayer:
    return AffineLayer(tuple(tuple(r) for r in rows), tuple(bias), activation)


@dataclass(frozen=True, eq=False)
class ReluMLP:
    layers: tuple[AffineLayer, ...]

    def __post_init__(self):
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise DimensionMismatch(
                    f"layer dims do not chain: {prev.out_dim} -> {nxt.in_dim}")

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim if self.layers else 0

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim if self.layers else 0

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def width(self) -> int:
        return max((layer.out_dim for layer in self.layers), default=0)

    def param_count(self) -> int:
        return sum(layer.param_count() for layer in self.layers)

    def iter_params(self) -> Iterable[Dyadic]:
        for layer in self.layers:
            yield from layer.iter_params()


def mlp(layers: Sequence[AffineLayer]) -> ReluMLP:
    return ReluMLP(tuple(layers))


@dataclass(frozen=True, eq=False)
class UniformAttentionBlock:
    """Residual averaging head: Z + M . rowmean(Z) broadcast to all columns."""

    proj_value_product: tuple[tuple[Dyadic, ...], ...]   # m x m

    @property
    def m(self) -> int:
        return len(self.proj_value_product)

    def param_count(self) -> int:
        return self.m * self.m

    def iter_params(self) -> Iterable[Dyadic]:
        for row in self.proj_value_product:
            yield from row


@dataclass(frozen=True, eq=False)
class HardmaxAttentionBlock:
    """Residual hardmax attention; ties share mass 1/|argmax| per column."""

    key: tuple[tuple[tuple[Dyadic, ...], ...], ...]     # per head, s x m
    query: tuple[tuple[tuple[Dyadic, ...], ...], ...]
    value: tuple[tuple[tuple[Dyadic, ...], ...], ...]
    proj: tuple[tuple[tuple[Dyadic, ...], ...], ...]    # per head, m x s

    @property
    def heads(self) -> int:
        return len(self.key)

    @property
    def head_size(self) -> int:
        return len(self.key[0]) if self.key else 0


NEXT_TOKEN = "next_token"
SEQ2SEQ = "seq2seq"


@dataclass(frozen=True, eq=False)
class TransformerModel:
    e_in: AffineLayer            # identity, token-wise, d -> d
    ff1: ReluMLP                 # token-wise, d -> 3
    ua: UniformAttentionBlock
    ff2: ReluMLP                 # token-wise, 3 -> 1
    e_out: AffineLayer           # identity, 1 -> 1
    mode: str = NEXT_TOKEN

    def __post_init__(self):
        chain = [
            ("e_in -> ff1", self.e_in.out_dim, self.ff1.in_dim),
            ("ff1 -> attention", self.ff1.out_dim, self.ua.m),
            ("attention -> ff2", self.ua.m, self.ff2.in_dim),
            ("ff2 -> e_out", self.ff2.out_dim, self.e_out.in_dim),
        ]
        for name, got, want in chain:
            if got != want:
                raise DimensionMismatch(f"{name}: {got} != {want}")

    def iter_params(self) -> Iterable[Dyadic]:
        yield from self.e_in.iter_params()
        yield from self.ff1.iter_params()
        yield from self.ua.iter_params()
        yield from self.ff2.iter_params()
        yield from self.e_out.iter_params()

    def param_count(self) -> int:
        return (self.e_in.param_count() + self.ff1.param_count()
                + self.ua.param_count() + self.ff2.param_count()
                + self.e_out.param_count())


@dataclass(frozen=True, eq=False)
class EmbeddingTransformerModel:
    """Lookup-table front end over token ids in [1, vocab_size]."""

    embedding: tuple[tuple[Dyadic, ...], ...]   # 3 x vocab_size
    ua: UniformAttentionBlock
    ff2: ReluMLP
    e_out: AffineLayer
    mode: str = NEXT_TOKEN

    @property
    def vocab_size(self) -> int:
        return len(self.embedding[0]) if self.embedding else 0

    def iter_params(self) -> Iterable[Dyadic]:
        for row in self.embedding:
            yield from row
        yield from self.ua.iter_params()
        yield from self.ff2.iter_params()
        yield from self.e_out.iter_params()

    def param_count(self) -> int:
        return (3 * self.vocab_size + self.ua.param_count()
                + self.ff2.param_count() + self.e_out.param_count())


@dataclass(frozen=True, eq=False)
class DeepSetModel:
    phi: ReluMLP                 # R^d -> R
    rho: ReluMLP                 # R -> R

    def iter_params(self) -> Iterable[Dyadic]:
        yield from self.phi.iter_params()
        yield from self.rho.iter_params()

    def param_count(self) -> int:
        return self.phi.param_count() + self.rho.param_count()


@dataclass
class SynthesisReport:
    width: int
    depth: int
    param_count: int
    max_bit_complexity: int
    bound_ledger: dict[str, CertifiedReal] = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def ledger_decimal(self, digits: int = 24) -> dict[str, list[str]]:
        return {name: list(value.decimal_bounds(digits))
                for name, value in self.bound_ledger.items()}

    def to_json(self) -> dict:
        return {
            "width": self.width,
            "depth": self.depth,
            "param_count": self.param_count,
            "max_bit_complexity": self.max_bit_complexity,
            "bound_ledger": self.ledger_decimal(),
            "extras": self.extras,
        }


# ---------------------------------------------------------------------------
# exact evaluation
# ---------------------------------------------------------------------------

_QVec = tuple[list[int], int, int]   # (nums, exp, den) value_i = nums[i] / (2**exp * den)


def _vec_from_values(values: Sequence) -> _QVec:
    fracs = [v.as_fraction() if isinstance(v, Dyadic) else Fraction(v) for v in values]
    den = 1
    for f in fracs:
        d = f.denominator
        d >>= (d & -d).bit_length() - 1
        den = den * d // math.gcd(den, d)
    exp = 0
    twos = []
    for f in fracs:
        d = f.denominator
        t = (d & -d).bit_length() - 1
        twos.append(t)
        exp = max(exp, t)
    nums = []
    for f, t in zip(fracs, twos):
        odd = f.denominator >> t
        nums.append(f.numerator * (den // odd) << (exp - t))
    return nums, exp, den


def _vec_to_fractions(vec: _QVec) -> list[Fraction]:
    nums, exp, den = vec
    scale = (1 << exp) * den
    return [Fraction(n, scale) for n in nums]


def _normalize(vec: _QVec) -> _QVec:
    nums, exp, den = vec
    nonzero = [n for n in nums if n]
    if not nonzero:
        return [0] * len(nums), 0, 1
    if exp:
        shift = exp
        for n in nonzero:
            shift = min(shift, (n & -n).bit_length() - 1)
            if shift == 0:
                break
        if shift:
            nums = [n >> shift for n in nums]
            exp -= shift
    if den > 1:
        g = den
        for n in nonzero:
            g = math.gcd(g, n)
            if g == 1:
                break
        if g > 1:
            nums = [n // g for n in nums]
            den //= g
    return nums, exp, den


@dataclass(frozen=True)
class _CompiledLayer:
    rows: tuple[tuple[int, ...], ...]
    wexp: int
    bias: tuple[int, ...]
    bexp: int
    relu: bool


_compile_cache: "WeakKeyDictionary[AffineLayer, _CompiledLayer]" = WeakKeyDictionary()


def _compile_layer(layer: AffineLayer) -> _CompiledLayer:
    cached = _compile_cache.get(layer)
    if cached is not None:
        return cached
    wexp = max((w.exp for row in layer.weights for w in row), default=0)
    rows = tuple(tuple(w.num << (wexp - w.exp) for w in row) for row in layer.weights)
    bexp = max((b.exp for b in layer.bias), default=0)
    bias = tuple(b.num << (bexp - b.exp) for b in layer.bias)
    compiled = _CompiledLayer(rows, wexp, bias, bexp, layer.activation == RELU)
    _compile_cache[layer] = compiled
    return compiled


def _apply_layer(layer: _CompiledLayer, vec: _QVec) -> _QVec:
    nums, xexp, den = vec
    sexp = layer.wexp + xexp
    exp = max(sexp, layer.bexp)
    s_shift = exp - sexp
    b_shift = exp - layer.bexp
    bscale = den << b_shift
    out = []
    for row, b in zip(layer.rows, layer.bias):
        acc = 0
        for w, x in zip(row, nums):
            if w:
                acc += w * x
        acc = (acc << s_shift) + b * bscale
        if layer.relu and acc < 0:
            acc = 0
        out.append(acc)
    return _normalize((out, exp, den))


def _run_mlp(net: ReluMLP, vec: _QVec) -> _QVec:
    for layer in net.layers:
        vec = _apply_layer(_compile_layer(layer), vec)
    return vec


def eval_mlp(net: ReluMLP, x: Sequence) -> list[Fraction]:
    """Exact forward pass; accepts Dyadic or Fraction entries."""
    if net.layers and len(x) != net.in_dim:
        raise DimensionMismatch(f"input dim {len(x)} != {net.in_dim}")
    return _vec_to_fractions(_run_mlp(net, _vec_from_values(x)))


def _align(vecs: list[_QVec]) -> tuple[list[list[int]], int, int]:
    exp = max(v[1] for v in vecs)
    den = 1
    for _, _, d in vecs:
        den = den * d // math.gcd(den, d)
    cols = []
    for nums, e, d in vecs:
        m = (den // d) << (exp - e)
        cols.append([n * m for n in nums])
    return cols, exp, den


def _eval_uniform_attention_vecs(block: UniformAttentionBlock,
                                 col_vecs: list[_QVec]) -> list[_QVec]:
    n = len(col_vecs)
    if n == 0:
        return []
    m = block.m
    cols, exp, den = _align(col_vecs)
    if any(len(c) != m for c in cols):
        raise DimensionMismatch("column height does not match attention width")
    total = [sum(c[i] for c in cols) for i in range(m)]
    # mean = total / n; fold n = 2**a * odd into the shared scale
    a = (n & -n).bit_length() - 1
    odd = n >> a
    mexp, mden = exp + a, den * odd
    proj = _compile_layer(AffineLayer(block.proj_value_product,
                                      tuple(Dyadic(0) for _ in range(m)), IDENTITY))
    delta = []
    for row in proj.rows:
        acc = 0
        for w, t in zip(row, total):
            if w:
                acc += w * t
        delta.append(acc)
    dexp, dden = proj.wexp + mexp, mden
    out = []
    for nums in cols:
        oexp = max(exp, dexp)
        oden = den * (dden // math.gcd(den, dden))
        cm = (oden // den) << (oexp - exp)
        dm = (oden // dden) << (oexp - dexp)
        out.append(_normalize(([x * cm + dv * dm for x, dv in zip(nums, delta)],
                               oexp, oden)))
    return out


def eval_uniform_attention(block: UniformAttentionBlock,
                           columns: Sequence[Sequence]) -> list[list[Fraction]]:
    """Exact residual-averaging attention over a list of m-vectors (columns)."""
    vecs = [_vec_from_values(col) for col in columns]
    return [_vec_to_fractions(v) for v in _eval_uniform_attention_vecs(block, vecs)]


def eval_hardmax_column(col: Sequence) -> list[Fraction]:
    """Column-wise hardmax weights: 1/|argmax set| at maxima, 0 elsewhere."""
    fracs = [v.as_fraction() if isinstance(v, Dyadic) else Fraction(v) for v in col]
    if not fracs:
        raise DimensionMismatch("hardmax of an empty column")
    top = max(fracs)
    hits = sum(1 for v in fracs if v == top)
    share = Fraction(1, hits)
    return [share if v == top else Fraction(0) for v in fracs]


def eval_hardmax_attention(block: HardmaxAttentionBlock,
                           columns: Sequence[Sequence]) -> list[list[Fraction]]:
    cols = [[v.as_fraction() if isinstance(v, Dyadic) else Fraction(v) for v in c]
            for c in columns]
    n = len(cols)
    m = len(cols[0]) if cols else 0
    out = [list(c) for c in cols]

    def matvec(mat, vec):
        return [sum(Fraction(w.num, 1 << w.exp) * x for w, x in zip(row, vec))
                for row in mat]

    for h in range(block.heads):
        keyed = [matvec(block.key[h], c) for c in cols]
        queried = [matvec(block.query[h], c) for c in cols]
        valued = [matvec(block.value[h], c) for c in cols]
        for j in range(n):
            scores = [sum(a * b for a, b in zip(keyed[i], queried[j])) for i in range(n)]
            weights = eval_hardmax_column(scores)
            mixed = [sum(weights[i] * valued[i][t] for i in range(n))
                     for t in range(block.head_size)]
            proj = matvec(block.proj[h], mixed)
            for t in range(m):
                out[j][t] += proj[t]
    return out


def eval_transformer(model: TransformerModel, X: Sequence[Sequence]) -> list[Fraction]:
    """Exact per-position outputs for a d x n input given as n token columns."""
    if not X:
        return []
    d = model.e_in.in_dim
    for col in X:
        if len(col) != d:
            raise DimensionMismatch(f"token dim {len(col)} != {d}")
    e_in = _compile_layer(model.e_in)
    cols = [_apply_layer(e_in, _vec_from_values(col)) for col in X]
    cols = [_run_mlp(model.ff1, c) for c in cols]
    cols = _eval_uniform_attention_vecs(model.ua, cols)
    cols = [_run_mlp(model.ff2, c) for c in cols]
    e_out = _compile_layer(model.e_out)
    outs = [_apply_layer(e_out, c) for c in cols]
    return [_vec_to_fractions(o)[0] for o in outs]


def eval_transformer_contexts(model: TransformerModel,
                              X: Sequence[Sequence]) -> list[list[Fraction]]:
    """Post-attention columns (the context ids), one 3-vector per position."""
    e_in = _compile_layer(model.e_in)
    cols = [_apply_layer(e_in, _vec_from_values(col)) for col in X]
    cols = [_run_mlp(model.ff1, c) for c in cols]
    cols = _eval_uniform_attention_vecs(model.ua, cols)
    return [_vec_to_fractions(c) for c in cols]


def eval_embedding_transformer(model: EmbeddingTransformerModel,
                               ids: Sequence[int]) -> list[Fraction]:
    """Exact outputs for a sequence of token ids in [1, vocab_size]."""
    omega = model.vocab_size
    cols = []
    for token in ids:
        if not 1 <= token <= omega:
            raise DimensionMismatch(f"token id {token} outside [1, {omega}]")
        cols.append(_vec_from_values([row[token - 1] for row in model.embedding]))
    cols = _eval_uniform_attention_vecs(model.ua, cols)
    cols = [_run_mlp(model.ff2, c) for c in cols]
    e_out = _compile_layer(model.e_out)
    return [_vec_to_fractions(_apply_layer(e_out, c))[0] for c in cols]


def eval_deepset(model: DeepSetModel, elements: Sequence[Sequence]) -> Fraction:
    """rho(sum_k phi(x_k)) evaluated exactly over multiset elements."""
    total = Fraction(0)
    for x in elements:
        total += eval_mlp(model.phi, x)[0]
    return eval_mlp(model.rho, [total])[0]


# ---------------------------------------------------------------------------
# resource accounting
# ---------------------------------------------------------------------------

def max_bit_complexity(params: Iterable[Dyadic]) -> int:
    return max((p.bit_complexity() for p in params), default=0)


def accounting(model, bound_ledger: dict[str, CertifiedReal] | None = None,
               extras: dict | None = None) -> SynthesisReport:
    """Width/depth/parameter/bit bookkeeping for any synthesized model.

    Transformer width follows max(m, sH, q); the per-stack MLP widths are
    exposed separately in extras since block width and MLP width need not
    coincide.
    """
    ledger = dict(bound_ledger or {})
    info = dict(extras or {})
    if isinstance(model, TransformerModel):
        m = model.ua.m
        q = max(model.ff1.width, model.ff2.width)
        width = max(m, m, q)    # uniform attention: one head of size m
        depth = model.ff1.depth + model.ff2.depth + 1
        info.update(ff1_width=model.ff1.width, ff2_width=model.ff2.width,
                    ff1_depth=model.ff1.depth, ff2_depth=model.ff2.depth,
                    attention_width=m)
    elif isinstance(model, EmbeddingTransformerModel):
        width = max(3, model.ff2.width)
        depth = model.ff2.depth + 1
        info.update(ff2_width=model.ff2.width, vocab_size=model.vocab_size)
    elif isinstance(model, DeepSetModel):
        width = max(model.phi.width, model.rho.width)
        depth = model.phi.depth + model.rho.depth
        info.update(phi_width=model.phi.width, rho_width=model.rho.width,
                    phi_depth=model.phi.depth, rho_depth=model.rho.depth)
    elif isinstance(model, ReluMLP):
        width, depth = model.width, model.depth
    else:
        raise TypeError(f"cannot account for {type(model).__name__}")
    return SynthesisReport(
        width=width,
        depth=depth,
        param_count=model.param_count(),
        max_bit_complexity=max_bit_complexity(model.iter_params()),
        bound_ledger=ledger,
        extras=info,
    )
