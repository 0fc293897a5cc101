"""Assembles full models: next-token, seq-to-seq, deep set, embedding,
limited-bit variants.

The label-independent part (token fingerprints, sequence ids, attention) is
factored into a context stage so sweeps over many labelings of the same
inputs can reuse it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .errors import ConsistencyError, NotDistinct, RangeError
from .ffn import (
    MemorizingFFN,
    ScalarEmbedding,
    memorizing_ffn,
    memorizing_ffn_limited_bits,
    project_net,
)
from .ir import (
    IDENTITY,
    AffineLayer,
    DeepSetModel,
    EmbeddingTransformerModel,
    RELU,
    ReluMLP,
    TransformerModel,
    UniformAttentionBlock,
    accounting,
    affine,
    mlp,
)
from .numerics import PI, CertifiedReal, Dyadic, certified_ceil
from .separation import (
    ConsistencyGroup,
    Multiset,
    RestrictionSet,
    SeparatingFunction,
    SeparationParams,
    Token,
    check_separated,
    consistency_groups,
    multiset_key,
    restriction_set,
    separating_function,
    token_key,
)

FFN_WIDTH = 12
FFN_LIMITED_WIDTH = 13


def _clamp_budget(bit_budget: int, n_points: int) -> int:
    """Cap a bit budget at ceil(sqrt(#points)) of the sub-problem; a smaller
    budget only lowers per-parameter bit complexity, so clamping is safe."""
    root = math.isqrt(max(n_points, 1))
    if root * root < n_points:
        root += 1
    return max(1, min(bit_budget, root))


def build_attention() -> UniformAttentionBlock:
    """Averaging head writing the mean of channel 1 into channel 3."""
    zero, one = Dyadic(0), Dyadic(1)
    return UniformAttentionBlock((
        (zero, zero, zero),
        (zero, zero, zero),
        (one, zero, zero),
    ))


def _identity_layer(dim: int) -> AffineLayer:
    one, zero = Dyadic(1), Dyadic(0)
    rows = tuple(tuple(one if i == j else zero for j in range(dim)) for i in range(dim))
    return AffineLayer(rows, tuple(zero for _ in range(dim)), IDENTITY)


def _zero_phi(d: int, width: int) -> ReluMLP:
    """Constant-zero stand-in for the sequence-id net when one multiset exists,
    padded to the standard stack width so accounting stays uniform."""
    zero = Dyadic(0)
    l1 = affine([[zero] * d for _ in range(width)], [zero] * width, RELU)
    l2 = affine([[zero] * width], [zero], RELU)
    return mlp([l1, l2])


def _merge_ff1(phi_net: ReluMLP, f_net: ReluMLP) -> ReluMLP:
    """Thread the token-fingerprint net and a zero pad alongside the
    sequence-id stack; output order (phi, fingerprint, 0)."""
    zero = Dyadic(0)
    d = phi_net.in_dim
    layers = []
    # layer 1: phi rows + fingerprint row + zero row, all over the raw input
    rows = [list(r) for r in phi_net.layers[0].weights]
    bias = list(phi_net.layers[0].bias)
    rows.append(list(f_net.layers[0].weights[0]))
    bias.append(f_net.layers[0].bias[0])
    rows.append([zero] * d)
    bias.append(zero)
    layers.append(affine(rows, bias, RELU))
    # layer 2: phi block + fingerprint output + zero, block diagonal
    o1 = phi_net.layers[0].out_dim
    rows, bias = [], []
    for r, b in zip(phi_net.layers[1].weights, phi_net.layers[1].bias):
        rows.append(list(r) + [zero, zero])
        bias.append(b)
    rows.append([zero] * o1 + [f_net.layers[1].weights[0][0], zero])
    bias.append(f_net.layers[1].bias[0])
    rows.append([zero] * (o1 + 2))
    bias.append(zero)
    layers.append(affine(rows, bias, RELU))
    # remaining phi layers with two pass-through channels appended
    for layer in phi_net.layers[2:]:
        width_in = layer.in_dim
        rows, bias = [], []
        for r, b in zip(layer.weights, layer.bias):
            rows.append(list(r) + [zero, zero])
            bias.append(b)
        pass_f = [zero] * (width_in + 2)
        pass_f[width_in] = Dyadic(1)
        rows.append(pass_f)
        bias.append(zero)
        rows.append([zero] * (width_in + 2))
        bias.append(zero)
        layers.append(affine(rows, bias, RELU))
    return mlp(layers)


# ---------------------------------------------------------------------------
# context stage (label independent)
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ContextStage:
    n: int
    d: int
    params: SeparationParams
    groups: tuple[ConsistencyGroup, ...]
    tokens: tuple[Token, ...]
    restriction: RestrictionSet
    separating: SeparatingFunction | None
    embedding: ScalarEmbedding
    ff1: ReluMLP
    ua: UniformAttentionBlock
    contexts: tuple[tuple[Fraction, Fraction, Fraction], ...]   # per group
    bit_budget: int | None

    def context_of(self, anchor: Token, multiset: Multiset) -> tuple:
        phi = self.phi_value
        mean = Fraction(sum(cnt * phi(tok) for tok, cnt in multiset.entries), self.n)
        return (Fraction(phi(anchor)), self.embedding.value_of(anchor).as_fraction(),
                mean)

    def phi_value(self, token: Token) -> int:
        if self.separating is None:
            return 0
        return self.separating.value(token)


def build_context_stage(sequences: Sequence[Sequence[Token]], labels, mode: str,
                        seed: str | int = 0, bit_budget: int | None = None) -> ContextStage:
    n = len(sequences[0])
    d = len(sequences[0][0])
    for seq in sequences:
        if len(seq) != n or any(len(tok) != d for tok in seq):
            raise RangeError("all sequences must share the same n and d")
    groups = consistency_groups(sequences, labels, mode)
    tokens = sorted({tok for seq in sequences for tok in seq}, key=token_key)
    params = check_separated(tokens)

    distinct_multisets = []
    seen = set()
    for g in groups:
        key = multiset_key(g.multiset)
        if key not in seen:
            seen.add(key)
            distinct_multisets.append(g.multiset)
    distinct_multisets.sort(key=multiset_key)

    embedding = project_net(tokens, params=params, seed=f"{seed}:tokens")
    if len(distinct_multisets) > 1:
        restriction = restriction_set(distinct_multisets)
        separating = separating_function(distinct_multisets, restriction,
                                         seed=f"{seed}:separating")
        members = set(restriction.elements)
        labeled = [tok for tok in tokens if tok in members]
        phi_labels = [separating.value(tok) for tok in labeled]
        zero_tail = [tok for tok in tokens if tok not in members]
        if bit_budget is None:
            phi = memorizing_ffn(labeled, phi_labels, zero_points=zero_tail,
                                 params=params, embedding=embedding,
                                 seed=f"{seed}:phi")
        else:
            phi = memorizing_ffn_limited_bits(
                labeled, phi_labels, _clamp_budget(bit_budget, len(labeled)),
                zero_points=zero_tail, params=params, embedding=embedding,
                seed=f"{seed}:phi")
        phi_net = phi.net
    else:
        restriction = RestrictionSet(())
        separating = None
        phi_net = _zero_phi(d, FFN_WIDTH if bit_budget is None else FFN_LIMITED_WIDTH)

    ff1 = _merge_ff1(phi_net, embedding.net)
    stage = ContextStage(
        n=n, d=d, params=params, groups=tuple(groups), tokens=tuple(tokens),
        restriction=restriction, separating=separating, embedding=embedding,
        ff1=ff1, ua=build_attention(), contexts=(), bit_budget=bit_budget)
    contexts = tuple(stage.context_of(g.anchor, g.multiset) for g in groups)
    if len(set(contexts)) != len(contexts):
        raise AssertionError("context ids collided for distinct memorization keys")
    object.__setattr__(stage, "contexts", contexts)
    return stage


# ---------------------------------------------------------------------------
# bound ledger
# ---------------------------------------------------------------------------

def _ledger(params: SeparationParams, n: int, d: int, n_seqs: int, c_max: int) -> dict:
    r = CertifiedReal.sqrt(params.r_sq)
    delta_inv = 1 / CertifiedReal.sqrt(params.delta_sq)
    big_n = CertifiedReal.of(n_seqs)
    ledger = {
        "R": 400 * CertifiedReal.sqrt(3 * d) * n**3 * r * big_n * big_n * big_n
             * big_n * big_n * delta_inv * PI,
        "R_phi": 20 * r * (n * n_seqs) ** 2 * delta_inv * CertifiedReal.sqrt(d * PI),
        "C_phi": CertifiedReal.of(certified_ceil(4 * n_seqs**3 * CertifiedReal.sqrt(PI))),
        "context_bound": 20 * r * n**2 * big_n * big_n * big_n * delta_inv
                         * CertifiedReal.sqrt(d * PI),
        "context_gap": CertifiedReal.of(Fraction(1, n)),
        "C": CertifiedReal.of(c_max),
        "r": r,
        "delta": CertifiedReal.sqrt(params.delta_sq),
    }
    ledger["R_2"] = ledger["R"]
    return ledger


def _finish_transformer(stage: ContextStage, ff2_result: MemorizingFFN, mode: str,
                        variant: str, n_seqs: int, c_max: int, seed) -> tuple:
    model = TransformerModel(
        e_in=_identity_layer(stage.d),
        ff1=stage.ff1,
        ua=stage.ua,
        ff2=ff2_result.net,
        e_out=_identity_layer(1),
        mode=mode,
    )
    ledger = _ledger(stage.params, stage.n, stage.d, n_seqs, c_max)
    report = accounting(model, ledger, extras={
        "variant": variant,
        "N": n_seqs,
        "n": stage.n,
        "d": stage.d,
        "C": c_max,
        "memorization_points": len(stage.groups),
        "seed": str(seed),
        "ff2_blocks": ff2_result.blocks,
        "ff2_slots_per_block": ff2_result.slots_per_block,
        "label_bits": ff2_result.crafted.label_bits,
        "anchor_bits": ff2_result.crafted.anchor_bits,
        "bit_budget": stage.bit_budget,
    })
    return model, report


def _group_labels(groups: Sequence[ConsistencyGroup], labels, mode: str) -> list[int]:
    """Label per group under a (possibly re-assigned) labeling of the inputs."""
    out = []
    for g in groups:
        values = {labels[m] if mode == "next_token" else labels[m[0]][m[1]]
                  for m in g.members}
        if len(values) != 1:
            raise ConsistencyError(
                f"members {g.members} share a key but carry labels {sorted(values)}")
        out.append(values.pop())
    return out


def synthesize_next_token(sequences: Sequence[Sequence[Token]], labels: Sequence[int],
                          seed: str | int = 0,
                          stage: ContextStage | None = None) -> tuple:
    """Exact next-token memorizer per the width-14 construction."""
    if stage is None:
        stage = build_context_stage(sequences, labels, "next_token", seed=seed)
    group_labels = _group_labels(stage.groups, labels, "next_token")
    ff2 = memorizing_ffn(stage.contexts, group_labels, seed=f"{seed}:ff2")
    return _finish_transformer(stage, ff2, "next_token", "next-token",
                               len(sequences), max(group_labels), seed)


def synthesize_seq2seq(sequences: Sequence[Sequence[Token]], labels,
                       seed: str | int = 0, stage: ContextStage | None = None) -> tuple:
    """Per-position memorizer; identical architecture, up to nN contexts."""
    if stage is None:
        stage = build_context_stage(sequences, labels, "seq2seq", seed=seed)
    group_labels = _group_labels(stage.groups, labels, "seq2seq")
    ff2 = memorizing_ffn(stage.contexts, group_labels, seed=f"{seed}:ff2")
    return _finish_transformer(stage, ff2, "seq2seq", "seq2seq",
                               len(sequences), max(group_labels), seed)


def synthesize_next_token_limited_bits(sequences: Sequence[Sequence[Token]],
                                       labels: Sequence[int], bit_budget: int,
                                       seed: str | int = 0) -> tuple:
    """Width-15 variant with the bit budget traded against depth."""
    n_seqs = len(sequences)
    root = math.isqrt(n_seqs)
    if root * root < n_seqs:
        root += 1
    if not 1 <= bit_budget <= root:
        raise RangeError(f"bit budget must lie in [1, {root}], got {bit_budget}")
    stage = build_context_stage(sequences, labels, "next_token", seed=seed,
                                bit_budget=bit_budget)
    group_labels = [g.label for g in stage.groups]
    ff2 = memorizing_ffn_limited_bits(stage.contexts, group_labels,
                                      _clamp_budget(bit_budget, len(stage.contexts)),
                                      seed=f"{seed}:ff2")
    model, report = _finish_transformer(stage, ff2, "next_token", "limited-bits",
                                        n_seqs, max(group_labels), seed)
    return model, report


# ---------------------------------------------------------------------------
# deep sets
# ---------------------------------------------------------------------------

def synthesize_deepset(multisets: Sequence, labels: Sequence[int],
                       seed: str | int = 0) -> tuple:
    """Deep set (phi, rho) with width 12 memorizing distinct multisets."""
    canon = [m if isinstance(m, Multiset) else Multiset.from_elements(m)
             for m in multisets]
    if len({multiset_key(m) for m in canon}) != len(canon):
        raise NotDistinct("deep-set inputs must be pairwise distinct multisets")
    tokens = sorted({tok for m in canon for tok in m.support()}, key=token_key)
    params = check_separated(tokens)
    embedding = project_net(tokens, params=params, seed=f"{seed}:tokens")
    ordered = sorted(canon, key=multiset_key)
    if len(ordered) > 1:
        restriction = restriction_set(ordered)
        separating = separating_function(ordered, restriction, seed=f"{seed}:separating")
        members = set(restriction.elements)
        labeled = [tok for tok in tokens if tok in members]
        zero_tail = [tok for tok in tokens if tok not in members]
        phi = memorizing_ffn(labeled, [separating.value(t) for t in labeled],
                             zero_points=zero_tail, params=params,
                             embedding=embedding, seed=f"{seed}:phi").net
        value = separating.value
    else:
        phi = _zero_phi(len(tokens[0]), FFN_WIDTH)
        value = lambda tok: 0
    sums = [sum(cnt * value(tok) for tok, cnt in m.entries) for m in canon]
    if len(set(sums)) != len(sums):
        raise AssertionError("sequence ids collided for distinct multisets")
    rho = memorizing_ffn([(Fraction(s),) for s in sums], list(labels),
                         seed=f"{seed}:rho")
    model = DeepSetModel(phi=phi, rho=rho.net)
    cap_m = max(m.cardinality for m in canon)
    n_sets = len(canon)
    r = CertifiedReal.sqrt(params.r_sq)
    delta_inv = 1 / CertifiedReal.sqrt(params.delta_sq)
    ledger = {
        "R": 80 * cap_m**2 * n_sets**5 * r * delta_inv * PI * CertifiedReal.sqrt(len(tokens[0])),
        "R_phi": 20 * r * (n_sets * cap_m) ** 2 * delta_inv
                 * CertifiedReal.sqrt(len(tokens[0]) * PI),
        "R_rho": 80 * cap_m * n_sets**5 * PI,
        "C": CertifiedReal.of(max(labels)),
        "sum_bound": 4 * cap_m * n_sets**3 * CertifiedReal.sqrt(PI),
    }
    report = accounting(model, ledger, extras={
        "variant": "deepset", "N": n_sets, "M": cap_m, "d": len(tokens[0]),
        "C": max(labels), "seed": str(seed),
    })
    return model, report


# ---------------------------------------------------------------------------
# embedding-layer variant (token ids)
# ---------------------------------------------------------------------------

def synthesize_embedding(id_sequences: Sequence[Sequence[int]], labels: Sequence[int],
                         vocab_size: int, seed: str | int = 0) -> tuple:
    """Lookup-table front end storing the sequence-id table directly."""
    for seq in id_sequences:
        for token in seq:
            if not 1 <= token <= vocab_size:
                raise RangeError(f"token id {token} outside [1, {vocab_size}]")
    sequences = [[(Dyadic(t),) for t in seq] for seq in id_sequences]
    n = len(sequences[0])
    groups = consistency_groups(sequences, labels, "next_token")
    distinct_multisets = []
    seen = set()
    for g in groups:
        key = multiset_key(g.multiset)
        if key not in seen:
            seen.add(key)
            distinct_multisets.append(g.multiset)
    distinct_multisets.sort(key=multiset_key)
    if len(distinct_multisets) > 1:
        restriction = restriction_set(distinct_multisets)
        separating = separating_function(distinct_multisets, restriction,
                                         seed=f"{seed}:separating")
        value = separating.value
    else:
        separating = None
        value = lambda tok: 0

    zero = Dyadic(0)
    col_phi, col_id, col_zero = [], [], []
    for token in range(1, vocab_size + 1):
        col_phi.append(Dyadic(value((Dyadic(token),))))
        col_id.append(Dyadic(token))
        col_zero.append(zero)
    embedding_matrix = (tuple(col_phi), tuple(col_id), tuple(col_zero))

    contexts = []
    for g in groups:
        mean = Fraction(sum(cnt * value(tok) for tok, cnt in g.multiset.entries), n)
        contexts.append((Fraction(value(g.anchor)), Fraction(g.anchor[0].num), mean))
    if len(set(contexts)) != len(contexts):
        raise AssertionError("context ids collided for distinct memorization keys")
    group_labels = [g.label for g in groups]
    ff2 = memorizing_ffn(contexts, group_labels, seed=f"{seed}:ff2")
    model = EmbeddingTransformerModel(
        embedding=embedding_matrix, ua=build_attention(), ff2=ff2.net,
        e_out=_identity_layer(1), mode="next_token")
    n_seqs = len(id_sequences)
    c_max = max(group_labels)
    ledger = {
        "R": 200 * CertifiedReal.sqrt(3) * n**2 * vocab_size * n_seqs**5
             * vocab_size * PI,
        "C": CertifiedReal.of(c_max),
    }
    report = accounting(model, ledger, extras={
        "variant": "embedding", "N": n_seqs, "n": n, "C": c_max,
        "vocab_size": vocab_size, "seed": str(seed),
        "memorization_points": len(groups),
    })
    return model, report


def build_ff1(sequences: Sequence[Sequence[Token]], labels, mode: str = "next_token",
              seed: str | int = 0) -> ReluMLP:
    """Token-wise front net emitting (sequence-id part, fingerprint, 0)."""
    return build_context_stage(sequences, labels, mode, seed=seed).ff1
