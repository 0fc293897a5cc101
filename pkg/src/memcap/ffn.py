"""Explicit ReLU-network constructions: routing, bit extraction, memorization.

Everything here emits plain IR layers whose behavior is re-verified by exact
forward passes before a result is returned.  The builders follow the closed
width/depth formulas of the underlying constructions exactly (equalities,
not upper bounds), which the test suite asserts per sub-network.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .errors import (
    GapViolation,
    NotDistinct,
    PreconditionViolation,
    RangeError,
    SearchExhausted,
)
from .ir import RELU, AffineLayer, ReluMLP, affine, eval_mlp, mlp
from .numerics import (
    PI,
    CertifiedReal,
    Dyadic,
    bit_len,
    certified_ceil,
    certified_lt,
)
from .separation import SeparationParams, check_separated, find_projection_vector


def _dy(value) -> Dyadic:
    if isinstance(value, Dyadic):
        return value
    if isinstance(value, int):
        return Dyadic(value)
    if isinstance(value, Fraction):
        return Dyadic.from_fraction(value)
    raise TypeError(f"not a dyadic-compatible value: {value!r}")


class _Builder:
    """Builds an MLP layer by layer over named channels."""

    def __init__(self, inputs: Sequence[str]):
        self.channels = list(inputs)
        self.layers: list[AffineLayer] = []

    def layer(self, outputs: Sequence[tuple[str, dict, object]]):
        index = {name: i for i, name in enumerate(self.channels)}
        rows, bias = [], []
        for name, coeffs, b in outputs:
            row = [Dyadic(0)] * len(self.channels)
            for ch, coeff in coeffs.items():
                row[index[ch]] = _dy(coeff)
            rows.append(row)
            bias.append(_dy(b))
        self.layers.append(affine(rows, bias, RELU))
        self.channels = [name for name, _, _ in outputs]

    def build(self) -> ReluMLP:
        return mlp(self.layers)


def concat_mlps(*nets: ReluMLP) -> ReluMLP:
    layers = []
    for net in nets:
        layers.extend(net.layers)
    return mlp(layers)


# ---------------------------------------------------------------------------
# interval indicator and hittest gadgets
# ---------------------------------------------------------------------------

def support_net(a: int, b: int) -> ReluMLP:
    """Indicator of [a, b] with zero zones below a - 1/2 and above b + 1/2."""
    if a < 0 or b < 0 or a >= b:
        raise RangeError(f"support_net needs naturals a < b, got ({a}, {b})")
    build = _Builder(["x"])
    build.layer([
        ("lo", {"x": -2}, 2 * a),
        ("hi", {"x": 2}, -2 * b),
    ])
    build.layer([("out", {"lo": -1, "hi": -1}, 1)])
    return build.build()


def hittest_net() -> ReluMLP:
    """F(x, y) = 1 on x in [y, y+1]; 0 once x > y + 3/2 or x < y - 1/2."""
    build = _Builder(["x", "y"])
    build.layer([
        ("lo", {"x": -2, "y": 2}, 0),
        ("hi", {"x": 2, "y": -2}, -2),
    ])
    build.layer([("out", {"lo": -1, "hi": -1}, 1)])
    return build.build()


# ---------------------------------------------------------------------------
# bit extraction via the triangle map
# ---------------------------------------------------------------------------

def bit_extract_prep(n_bits: int) -> ReluMLP:
    """Affine prep: x -> the two staggered triangle-map seeds for x / 2**n."""
    scale = Fraction(1, 1 << n_bits)
    build = _Builder(["x"])
    build.layer([
        ("z1", {"x": scale}, Fraction(1, 1 << (n_bits + 1))),
        ("z2", {"x": scale}, Fraction(1, 1 << (n_bits + 2))),
    ])
    return build.build()


def bit_extract_net(n_bits: int, i: int, j: int) -> ReluMLP:
    """Advance the two triangle-map channels from bit i-1 to j, emitting
    the bit block (bits i..j of an n_bits-wide natural) as a third output.

    Width 5, depth 3 (j - i + 1); exact on every x with LEN(x) <= n_bits.
    """
    if not (1 <= i <= j <= n_bits):
        raise RangeError(f"invalid bit window [{i}, {j}] of {n_bits}")
    build = _Builder(["z1", "z2"])
    for k in range(i, j + 1):
        first = k == i
        acc_in = {} if first else {"acc": 2}
        halfstep = 1 << (n_bits - k + 1)     # 1 / (2 eps_k)
        build.layer([
            ("a1", {"z1": 2}, 0),
            ("a2", {"z1": 4}, -2),
            ("a3", {"z2": 2}, 0),
            ("a4", {"z2": 4}, -2),
            ("acc", dict(acc_in), 0),
        ])
        build.layer([
            ("z1", {"a1": 1, "a2": -1}, 0),
            ("z2", {"a3": 1, "a4": -1}, 0),
            ("acc", {"acc": 1}, 0),
        ])
        # new bit = 1/2 - (z1 - z2) / (2 eps_k), an exact 0/1 value
        build.layer([
            ("z1", {"z1": 1}, 0),
            ("z2", {"z2": 1}, 0),
            ("acc", {"acc": 1, "z1": -halfstep, "z2": halfstep}, Fraction(1, 2)),
        ])
    return build.build()


# ---------------------------------------------------------------------------
# payload routing (one or two payload streams over shared interval gadgets)
# ---------------------------------------------------------------------------

def _router_blocks(values: Sequence[Fraction], block_size: int) -> list[tuple[int, int]]:
    """Interval [a_j, b_j] per block of block_size consecutive sorted values."""
    blocks = []
    for start in range(0, len(values), block_size):
        chunk = values[start:start + block_size]
        a = math.floor(chunk[0])
        b = math.floor(chunk[-1] + 1)
        blocks.append((a, b))
    return blocks


def _check_router_inputs(values: list[Fraction]):
    for prev, nxt in zip(values, values[1:]):
        if nxt < prev:
            raise GapViolation("router inputs must be sorted ascending")
        if nxt - prev < 2:
            raise GapViolation(f"router gap {float(nxt - prev)} < 2")


def subset_router_net(x_values: Sequence, payloads: Sequence[int],
                      range_hint: int | None = None) -> ReluMLP:
    """Route each of N sorted scalars to its block payload; off-grid inputs
    (at distance >= 2 from every x_i) map to 0 or some payload.

    Width 4, depth 3 m + 2 for m payload blocks.
    """
    values = [v.as_fraction() if isinstance(v, Dyadic) else Fraction(v) for v in x_values]
    _check_router_inputs(values)
    n, m = len(values), len(payloads)
    if not 1 <= m <= n:
        raise RangeError(f"need 1 <= m <= N, got m={m}, N={n}")
    k = -(-n // m)
    if (m - 1) * k >= n:
        raise RangeError("payload count does not match block partition")
    if range_hint is not None and values[-1] >= range_hint:
        raise RangeError(f"largest input {float(values[-1])} exceeds range {range_hint}")
    build = _Builder(["x0"])
    build.layer([("x", {"x0": 1}, 0), ("acc", {}, 0)])
    for (a, b), w in zip(_router_blocks(values, k), payloads):
        build.layer([
            ("lo", {"x": -2}, 2 * a),
            ("hi", {"x": 2}, -2 * b),
            ("x", {"x": 1}, 0),
            ("acc", {"acc": 1}, 0),
        ])
        build.layer([
            ("g", {"lo": -1, "hi": -1}, 1),
            ("x", {"x": 1}, 0),
            ("acc", {"acc": 1}, 0),
        ])
        build.layer([
            ("x", {"x": 1}, 0),
            ("acc", {"acc": 1, "g": w}, 0),
        ])
    build.layer([("out", {"acc": 1}, 0)])
    return build.build()


def _dual_router(values: Sequence[Fraction], label_payloads: Sequence[int],
                 anchor_payloads: Sequence[int], block_size: int,
                 thread_acc: bool = False) -> ReluMLP:
    """Two payload streams routed through shared interval gadgets.

    Input (x[, acc]) -> output (x, w, u[, acc]); depth 3 m + 2, width 5 (+1
    for a threaded accumulator).
    """
    inputs = ["x0", "acc0"] if thread_acc else ["x0"]
    passes = ["acc"] if thread_acc else []
    build = _Builder(inputs)
    head = [("x", {"x0": 1}, 0), ("w", {}, 0), ("u", {}, 0)]
    if thread_acc:
        head.append(("acc", {"acc0": 1}, 0))
    build.layer(head)
    for (a, b), wj, uj in zip(_router_blocks(values, block_size),
                              label_payloads, anchor_payloads):
        build.layer([
            ("lo", {"x": -2}, 2 * a),
            ("hi", {"x": 2}, -2 * b),
            ("x", {"x": 1}, 0),
            ("w", {"w": 1}, 0),
            ("u", {"u": 1}, 0),
        ] + [(p, {p: 1}, 0) for p in passes])
        build.layer([
            ("g", {"lo": -1, "hi": -1}, 1),
            ("x", {"x": 1}, 0),
            ("w", {"w": 1}, 0),
            ("u", {"u": 1}, 0),
        ] + [(p, {p: 1}, 0) for p in passes])
        build.layer([
            ("x", {"x": 1}, 0),
            ("w", {"w": 1, "g": wj}, 0),
            ("u", {"u": 1, "g": uj}, 0),
        ] + [(p, {p: 1}, 0) for p in passes])
    tail = [("x", {"x": 1}, 0), ("w", {"w": 1}, 0), ("u", {"u": 1}, 0)]
    if thread_acc:
        tail.append(("acc", {"acc": 1}, 0))
    build.layer(tail)
    return build.build()


# ---------------------------------------------------------------------------
# block decoder (anchor hittest + payload bit extraction)
# ---------------------------------------------------------------------------

def block_decoder_net(n_slots: int, anchor_bits: int, payload_bits: int,
                      thread_acc: bool = False) -> ReluMLP:
    """Decode (x, w, u): if floor(x) equals the anchor in some slot of u,
    output the same slot of w; output 0 whenever x misses every anchor by
    more than 1 (after the -1/2 shift).

    u holds n_slots anchor slots of anchor_bits each; w holds n_slots payload
    slots of payload_bits each.  Width 12 (13 with a threaded accumulator),
    depth 3 n max(anchor_bits, payload_bits) + 2 n + 2.
    """
    if n_slots < 1 or anchor_bits < 1 or payload_bits < 1:
        raise RangeError("block_decoder_net needs positive slot/bit counts")
    au = n_slots * anchor_bits
    aw = n_slots * payload_bits
    maxb = max(anchor_bits, payload_bits)
    passes = ["acc"] if thread_acc else []

    build = _Builder(["x", "w", "u"] + (["acc0"] if thread_acc else []))
    head = [
        ("x", {"x": 1}, 0),
        ("U1", {"u": Fraction(1, 1 << au)}, Fraction(1, 1 << (au + 1))),
        ("U2", {"u": Fraction(1, 1 << au)}, Fraction(1, 1 << (au + 2))),
        ("W1", {"w": Fraction(1, 1 << aw)}, Fraction(1, 1 << (aw + 1))),
        ("W2", {"w": Fraction(1, 1 << aw)}, Fraction(1, 1 << (aw + 2))),
        ("Ym", {}, 0),
    ]
    if thread_acc:
        head.append(("acc", {"acc0": 1}, 0))
    build.layer(head)

    for slot in range(n_slots):
        for t in range(1, maxb + 1):
            u_active = t <= anchor_bits
            w_active = t <= payload_bits
            first = t == 1
            # L1: triangle-map prep for the active chains, passes for the rest
            out = [("x", {"x": 1}, 0)]
            if u_active:
                out += [
                    ("ua1", {"U1": 2}, 0), ("ua2", {"U1": 4}, -2),
                    ("ua3", {"U2": 2}, 0), ("ua4", {"U2": 4}, -2),
                    ("AccU", {} if first else {"AccU": 1}, 0),
                ]
            else:
                out += [("U1", {"U1": 1}, 0), ("U2", {"U2": 1}, 0),
                        ("AccU", {"AccU": 1}, 0)]
            if w_active:
                out += [
                    ("wa1", {"W1": 2}, 0), ("wa2", {"W1": 4}, -2),
                    ("wa3", {"W2": 2}, 0), ("wa4", {"W2": 4}, -2),
                    ("AccW", {} if first else {"AccW": 1}, 0),
                ]
            else:
                out += [("W1", {"W1": 1}, 0), ("W2", {"W2": 1}, 0),
                        ("AccW", {"AccW": 1}, 0)]
            merge = {"Ym": 1, "inner": 1} if (first and slot > 0) else {"Ym": 1}
            out.append(("Ym", merge, 0))
            out += [(p, {p: 1}, 0) for p in passes]
            build.layer(out)
            # L2: apply the triangle map
            out = [("x", {"x": 1}, 0)]
            if u_active:
                out += [("U1", {"ua1": 1, "ua2": -1}, 0),
                        ("U2", {"ua3": 1, "ua4": -1}, 0),
                        ("AccU", {"AccU": 1}, 0)]
            else:
                out += [("U1", {"U1": 1}, 0), ("U2", {"U2": 1}, 0),
                        ("AccU", {"AccU": 1}, 0)]
            if w_active:
                out += [("W1", {"wa1": 1, "wa2": -1}, 0),
                        ("W2", {"wa3": 1, "wa4": -1}, 0),
                        ("AccW", {"AccW": 1}, 0)]
            else:
                out += [("W1", {"W1": 1}, 0), ("W2", {"W2": 1}, 0),
                        ("AccW", {"AccW": 1}, 0)]
            out.append(("Ym", {"Ym": 1}, 0))
            out += [(p, {p: 1}, 0) for p in passes]
            build.layer(out)
            # L3: fold the freshly exposed bit into the slot accumulators
            if u_active:
                ku = slot * anchor_bits + t
                hu = 1 << (au - ku + 1)
                acc_u_expr = ({"AccU": 2, "U1": -hu, "U2": hu}, Fraction(1, 2))
            else:
                acc_u_expr = ({"AccU": 1}, 0)
            if w_active:
                kw = slot * payload_bits + t
                hw = 1 << (aw - kw + 1)
                acc_w_expr = ({"AccW": 2, "W1": -hw, "W2": hw}, Fraction(1, 2))
            else:
                acc_w_expr = ({"AccW": 1}, 0)
            out = [("x", {"x": 1}, 0),
                   ("U1", {"U1": 1}, 0), ("U2", {"U2": 1}, 0),
                   ("W1", {"W1": 1}, 0), ("W2", {"W2": 1}, 0),
                   ("Ym", {"Ym": 1}, 0)]
            if t < maxb:
                out += [("AccU",) + acc_u_expr, ("AccW",) + acc_w_expr]
            else:
                # the slot anchor is complete: spawn the hittest hidden pair
                coeffs, bias = acc_u_expr
                h1 = {ch: 2 * c for ch, c in coeffs.items()}
                h1["x"] = h1.get("x", 0) - 2
                h2 = {ch: -2 * c for ch, c in coeffs.items()}
                h2["x"] = h2.get("x", 0) + 2
                out += [("AccW",) + acc_w_expr,
                        ("h1", h1, 2 * bias),
                        ("h2", h2, -2 * bias - 2)]
            out += [(p, {p: 1}, 0) for p in passes]
            build.layer(out)
        # B1: hittest output
        build.layer([
            ("x", {"x": 1}, 0),
            ("U1", {"U1": 1}, 0), ("U2", {"U2": 1}, 0),
            ("W1", {"W1": 1}, 0), ("W2", {"W2": 1}, 0),
            ("Ym", {"Ym": 1}, 0),
            ("AccW", {"AccW": 1}, 0),
            ("hit", {"h1": -1, "h2": -1}, 1),
        ] + [(p, {p: 1}, 0) for p in passes])
        # B2: gated payload for this slot
        gate = 1 << (payload_bits + 1)
        build.layer([
            ("x", {"x": 1}, 0),
            ("U1", {"U1": 1}, 0), ("U2", {"U2": 1}, 0),
            ("W1", {"W1": 1}, 0), ("W2", {"W2": 1}, 0),
            ("Ym", {"Ym": 1}, 0),
            ("inner", {"hit": gate, "AccW": 1}, -gate),
        ] + [(p, {p: 1}, 0) for p in passes])
    if thread_acc:
        build.layer([("x", {"x": 1}, 0),
                     ("acc", {"acc": 1, "Ym": 1, "inner": 1}, 0)])
    else:
        build.layer([("out", {"Ym": 1, "inner": 1}, 0)])
    return build.build()


# ---------------------------------------------------------------------------
# scalar embedding (projection onto a separated line)
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ScalarEmbedding:
    """Width-1 depth-2 net mapping the input points to separated scalars.

    All projected values live in [2, R] and distinct points land at least 2
    apart; these facts are verified exactly at construction time.
    """

    net: ReluMLP
    points: tuple
    values: tuple[Dyadic, ...]
    range_bound: CertifiedReal
    direction: tuple[Dyadic, ...]

    def value_of(self, point) -> Dyadic:
        key = _point_key(point)
        try:
            return self._index()[key]
        except KeyError:
            raise KeyError(f"point {point!r} was not embedded")

    def _index(self) -> dict:
        cached = getattr(self, "_cache", None)
        if cached is None:
            cached = {_point_key(p): v for p, v in zip(self.points, self.values)}
            object.__setattr__(self, "_cache", cached)
        return cached


def _point_key(point) -> tuple[Fraction, ...]:
    return tuple(c.as_fraction() if isinstance(c, Dyadic) else Fraction(c)
                 for c in point)


def project_net(points: Sequence, params: SeparationParams | None = None,
                seed: str | int = 0, frac_bits: int | None = None) -> ScalarEmbedding:
    """Project points to scalars in [2, R] with pairwise gaps >= 2.

    The scale is forced to be a multiple of the odd part of the coordinate
    denominators so all projected values (and the bias) stay dyadic even for
    rational inputs such as post-attention context ids.
    """
    keyed: dict[tuple, tuple] = {}
    for p in points:
        keyed.setdefault(_point_key(p), tuple(p))
    distinct = list(keyed.values())
    dim = len(distinct[0])
    if params is None:
        params = check_separated([tuple(_dy_or_fraction(c) for c in p)
                                  for p in distinct])
    v_count = len(distinct)
    r_expr = CertifiedReal.sqrt(params.r_sq)
    delta_inv = 1 / CertifiedReal.sqrt(params.delta_sq)
    range_bound = 20 * v_count**2 * r_expr * delta_inv * CertifiedReal.sqrt(dim * PI)

    if v_count == 1:
        build = _Builder(["x%d" % t for t in range(dim)])
        build.layer([("h", {}, 2)])
        build.layer([("out", {"h": 1}, 0)])
        return ScalarEmbedding(net=build.build(), points=tuple(distinct),
                               values=(Dyadic(2),), range_bound=range_bound,
                               direction=tuple([Dyadic(1)] + [Dyadic(0)] * (dim - 1)))

    direction = find_projection_vector(distinct, dim, seed=f"{seed}:embed",
                                       frac_bits=frac_bits)
    vfrac = [c.as_fraction() for c in direction]
    projections = [sum(vc * pc for vc, pc in zip(vfrac, _point_key(p)))
                   for p in distinct]
    gap = None
    for i in range(v_count):
        for j in range(i + 1, v_count):
            g = abs(projections[i] - projections[j])
            if gap is None or g < gap:
                gap = g
    if gap == 0:
        raise SearchExhausted("projection collapsed two distinct points")
    odd = 1
    for p in projections:
        den = p.denominator
        den >>= (den & -den).bit_length() - 1
        odd = odd * den // math.gcd(odd, den)
    scale = odd * max(1, -(-2 * gap.denominator // (gap.numerator * odd)))
    shift = 2 - scale * min(projections)
    values = [Dyadic.from_fraction(scale * p + shift) for p in projections]

    # exact invariant checks: min = 2, pairwise gaps >= 2, max below R
    assert min(values).as_fraction() == 2
    ordered = sorted(val.as_fraction() for val in values)
    for a, b in zip(ordered, ordered[1:]):
        if b - a < 2:
            raise AssertionError("projected gap below 2 despite verified direction")
    if not certified_lt(max(ordered), range_bound):
        raise SearchExhausted("projected values exceeded the declared range")

    weights = [Dyadic(scale) * c for c in direction]
    build = _Builder(["x%d" % t for t in range(dim)])
    build.layer([("h", {f"x{t}": weights[t] for t in range(dim)},
                  Dyadic.from_fraction(shift))])
    build.layer([("out", {"h": 1}, 0)])
    return ScalarEmbedding(net=build.build(), points=tuple(distinct),
                           values=tuple(values), range_bound=range_bound,
                           direction=direction)


def _dy_or_fraction(c):
    return c if isinstance(c, Dyadic) else Fraction(c)


# ---------------------------------------------------------------------------
# crafted payload blocks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CraftedWeights:
    """Per-block label and anchor payloads for the router/decoder pair."""

    w_blocks: tuple[int, ...]
    u_blocks: tuple[int, ...]
    slots_per_block: int
    label_bits: int
    anchor_bits: int

    def label_at(self, block: int, slot: int) -> int:
        width = self.slots_per_block * self.label_bits
        lo = slot * self.label_bits + 1
        from .numerics import bin_slice
        return bin_slice(self.w_blocks[block], lo, lo + self.label_bits - 1, width)

    def anchor_at(self, block: int, slot: int) -> int:
        width = self.slots_per_block * self.anchor_bits
        lo = slot * self.anchor_bits + 1
        from .numerics import bin_slice
        return bin_slice(self.u_blocks[block], lo, lo + self.anchor_bits - 1, width)


def craft_weights(anchors: Sequence[int], labels: Sequence[int], k: int,
                  label_bits: int, anchor_bits: int) -> CraftedWeights:
    """Pack sorted anchors/labels into k-slot blocks, zero padding the tail."""
    if len(anchors) != len(labels):
        raise RangeError("anchors and labels must align")
    w_blocks, u_blocks = [], []
    for start in range(0, len(anchors), k):
        w = u = 0
        chunk = list(zip(anchors[start:start + k], labels[start:start + k]))
        for anchor, label in chunk:
            if not 1 <= label < (1 << label_bits):
                raise RangeError(f"label {label} does not fit {label_bits} bits")
            if not 0 <= anchor < (1 << anchor_bits):
                raise RangeError(f"anchor {anchor} does not fit {anchor_bits} bits")
        seen = [anchor for anchor, _ in chunk]
        for i in range(len(seen)):
            for j in range(i + 1, len(seen)):
                if abs(seen[i] - seen[j]) < 2:
                    raise PreconditionViolation(
                        f"anchors {seen[i]} and {seen[j]} closer than 2 in one block")
        for slot in range(k):
            anchor, label = chunk[slot] if slot < len(chunk) else (0, 0)
            w = (w << label_bits) | label
            u = (u << anchor_bits) | anchor
        w_blocks.append(w)
        u_blocks.append(u)
    return CraftedWeights(tuple(w_blocks), tuple(u_blocks), k, label_bits, anchor_bits)


# ---------------------------------------------------------------------------
# the full memorizing feed-forward network
# ---------------------------------------------------------------------------

def _block_count(n: int) -> tuple[int, int, int]:
    """(m_nominal, k, m_used) for the sqrt(N log N) block partition."""
    lg = CertifiedReal.log2(max(n, 2))
    m_nominal = max(1, certified_ceil(CertifiedReal.sqrt(n * lg)))
    k = -(-n // m_nominal)
    m_used = -(-n // k)
    return m_nominal, k, m_used


@dataclass(frozen=True, eq=False)
class MemorizingFFN:
    net: ReluMLP
    embedding: ScalarEmbedding
    crafted: CraftedWeights
    labeled_points: tuple
    labels: tuple[int, ...]
    zero_points: tuple
    blocks: int
    slots_per_block: int

    @property
    def width(self) -> int:
        return self.net.width

    @property
    def depth(self) -> int:
        return self.net.depth


def _prepare(labeled_points, labels, zero_points, params, embedding, seed):
    if not labeled_points:
        raise RangeError("at least one labeled point is required")
    if len(labeled_points) != len(labels):
        raise RangeError("labels must align with labeled points")
    if any(label < 1 for label in labels):
        raise RangeError("labels must be positive integers")
    all_points = list(labeled_points) + list(zero_points)
    keys = [_point_key(p) for p in all_points]
    if len(set(keys)) != len(keys):
        raise NotDistinct("labeled and zero points must be pairwise distinct")
    if embedding is None:
        embedding = project_net(all_points, params=params, seed=f"{seed}:stage1")
    order = sorted(range(len(labeled_points)),
                   key=lambda i: embedding.value_of(labeled_points[i]).as_fraction())
    values_sorted = [embedding.value_of(labeled_points[i]) for i in order]
    labels_sorted = [labels[i] for i in order]
    return embedding, values_sorted, labels_sorted


def _verify_exact(net: ReluMLP, labeled_points, labels, zero_points):
    for point, label in zip(labeled_points, labels):
        got = eval_mlp(net, list(point))[0]
        if got != label:
            raise AssertionError(f"memorization failed: F({point}) = {got} != {label}")
    for point in zero_points:
        got = eval_mlp(net, list(point))[0]
        if got != 0:
            raise AssertionError(f"zero tail failed: F({point}) = {got} != 0")


def _verify_routing_one_hot(values_sorted, k):
    fractions = [v.as_fraction() for v in values_sorted]
    blocks = _router_blocks(fractions, k)
    for x in fractions:
        fires = []
        for a, b in blocks:
            out = eval_mlp(support_net(a, b), [x])[0]
            if out != 0:
                fires.append(out)
        if fires != [Fraction(1)]:
            raise AssertionError(f"routing not one-hot at {x}: {fires}")


def memorizing_ffn(labeled_points: Sequence, labels: Sequence[int],
                   zero_points: Sequence = (), params: SeparationParams | None = None,
                   embedding: ScalarEmbedding | None = None,
                   seed: str | int = 0) -> MemorizingFFN:
    """Width-12 exact memorizer: labeled points to their labels, rest to 0."""
    embedding, values_sorted, labels_sorted = _prepare(
        labeled_points, labels, zero_points, params, embedding, seed)
    n = len(values_sorted)
    _, k, m_used = _block_count(n)
    anchors = [v.floor() for v in values_sorted]
    label_bits = bit_len(max(labels_sorted))
    anchor_bits = bit_len(max(anchors))
    crafted = craft_weights(anchors, labels_sorted, k, label_bits, anchor_bits)
    router = _dual_router([v.as_fraction() for v in values_sorted],
                          crafted.w_blocks, crafted.u_blocks, k)
    decoder = block_decoder_net(k, anchor_bits, label_bits)
    net = concat_mlps(embedding.net, router, decoder)
    result = MemorizingFFN(net=net, embedding=embedding, crafted=crafted,
                           labeled_points=tuple(labeled_points),
                           labels=tuple(labels), zero_points=tuple(zero_points),
                           blocks=m_used, slots_per_block=k)
    _verify_routing_one_hot(values_sorted, k)
    _verify_exact(net, labeled_points, labels, zero_points)
    return result


def memorizing_ffn_limited_bits(labeled_points: Sequence, labels: Sequence[int],
                                bit_budget: int, zero_points: Sequence = (),
                                params: SeparationParams | None = None,
                                embedding: ScalarEmbedding | None = None,
                                seed: str | int = 0) -> MemorizingFFN:
    """Width-13 variant trading depth for per-parameter bit complexity.

    Partitions the labeled points into ceil(N / B^2) groups and chains one
    memorizer per group behind a shared projection, accumulating outputs in
    a threaded channel.
    """
    n = len(labeled_points)
    root = math.isqrt(max(n, 1))
    if root * root < n:
        root += 1
    if not 1 <= bit_budget <= root:
        raise RangeError(f"bit budget must lie in [1, {root}], got {bit_budget}")
    embedding, values_sorted, labels_sorted = _prepare(
        labeled_points, labels, zero_points, params, embedding, seed)
    group_size = bit_budget * bit_budget
    label_bits = bit_len(max(labels_sorted))
    anchor_bits = bit_len(max(v.floor() for v in values_sorted))

    build_layers = [affine([[Dyadic(1)], [Dyadic(0)]], [Dyadic(0), Dyadic(0)], RELU)]
    crafted_blocks_w: list[int] = []
    crafted_blocks_u: list[int] = []
    total_blocks = 0
    slots = 0
    for start in range(0, n, group_size):
        group_vals = values_sorted[start:start + group_size]
        group_labels = labels_sorted[start:start + group_size]
        _, k, m_used = _block_count(len(group_vals))
        anchors = [v.floor() for v in group_vals]
        crafted = craft_weights(anchors, group_labels, k, label_bits, anchor_bits)
        router = _dual_router([v.as_fraction() for v in group_vals],
                              crafted.w_blocks, crafted.u_blocks, k, thread_acc=True)
        decoder = block_decoder_net(k, anchor_bits, label_bits, thread_acc=True)
        build_layers.extend(router.layers)
        build_layers.extend(decoder.layers)
        crafted_blocks_w.extend(crafted.w_blocks)
        crafted_blocks_u.extend(crafted.u_blocks)
        total_blocks += m_used
        slots = k
    build_layers.append(affine([[Dyadic(0), Dyadic(1)]], [Dyadic(0)], RELU))
    net = concat_mlps(embedding.net, mlp(build_layers))
    crafted = CraftedWeights(tuple(crafted_blocks_w), tuple(crafted_blocks_u),
                             slots, label_bits, anchor_bits)
    result = MemorizingFFN(net=net, embedding=embedding, crafted=crafted,
                           labeled_points=tuple(labeled_points),
                           labels=tuple(labels), zero_points=tuple(zero_points),
                           blocks=total_blocks, slots_per_block=slots)
    _verify_exact(net, labeled_points, labels, zero_points)
    return result
