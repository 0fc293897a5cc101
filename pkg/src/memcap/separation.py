"""Multiset machinery: separatedness, restriction sets, separating functions.

Tokens are tuples of Dyadic coordinates.  All separation claims produced
here are verified with exact arithmetic before being returned; randomized
search only proposes candidates, it never certifies them.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .errors import (
    ConsistencyError,
    DegenerateData,
    NotDistinct,
    SearchExhausted,
)
from .numerics import CertifiedReal, Dyadic, PI, certified_ceil, certified_floor, certified_le

Token = tuple[Dyadic, ...]


def token_key(token: Token) -> tuple[Fraction, ...]:
    return tuple(x.as_fraction() for x in token)


def multiset_key(m: "Multiset") -> tuple:
    return tuple((token_key(tok), cnt) for tok, cnt in m.entries)


def _as_fraction_vector(point: Sequence) -> tuple[Fraction, ...]:
    out = []
    for x in point:
        out.append(x.as_fraction() if isinstance(x, Dyadic) else Fraction(x))
    return tuple(out)


# ---------------------------------------------------------------------------
# multisets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Multiset:
    """Canonical count-map over token vectors, sorted lexicographically."""

    entries: tuple[tuple[Token, int], ...]

    @staticmethod
    def from_elements(elements: Iterable[Token]) -> "Multiset":
        counts: dict[Token, int] = {}
        for tok in elements:
            counts[tok] = counts.get(tok, 0) + 1
        ordered = sorted(counts.items(), key=lambda kv: token_key(kv[0]))
        return Multiset(tuple(ordered))

    @property
    def cardinality(self) -> int:
        return sum(count for _, count in self.entries)

    def support(self) -> tuple[Token, ...]:
        return tuple(tok for tok, _ in self.entries)

    def count(self, token: Token) -> int:
        for tok, cnt in self.entries:
            if tok == token:
                return cnt
        return 0

    def counts(self) -> dict[Token, int]:
        return dict(self.entries)

    def restrict_key(self, members: Sequence[Token]) -> tuple[int, ...]:
        table = self.counts()
        return tuple(table.get(tok, 0) for tok in members)


def sequence_to_multiset(columns: Sequence[Token]) -> Multiset:
    return Multiset.from_elements(columns)


# ---------------------------------------------------------------------------
# (r, delta) measurement
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SeparationParams:
    """Normalized token bounds: r >= 1, 0 < delta <= 1 (squares kept exact)."""

    r_sq: Fraction
    delta_sq: Fraction
    raw_r_sq: Fraction
    raw_delta_sq: Fraction

    @property
    def r(self) -> CertifiedReal:
        return CertifiedReal.sqrt(self.r_sq)

    @property
    def delta(self) -> CertifiedReal:
        return CertifiedReal.sqrt(self.delta_sq)


def check_separated(tokens: Sequence[Token], require_delta: bool = False) -> SeparationParams:
    """Measure (r, delta) over the distinct tokens; brute-force all pairs."""
    if not tokens:
        raise DegenerateData("no tokens to measure")
    distinct = []
    seen = set()
    for tok in tokens:
        vec = _as_fraction_vector(tok)
        if vec not in seen:
            seen.add(vec)
            distinct.append(vec)
    r_sq = max(sum(c * c for c in vec) for vec in distinct)
    if len(distinct) == 1:
        if require_delta:
            raise DegenerateData("all tokens identical; no pairwise distance exists")
        delta_sq = Fraction(1)
    else:
        delta_sq = None
        for i in range(len(distinct)):
            for j in range(i + 1, len(distinct)):
                d2 = sum((a - b) ** 2 for a, b in zip(distinct[i], distinct[j]))
                if delta_sq is None or d2 < delta_sq:
                    delta_sq = d2
    return SeparationParams(
        r_sq=max(r_sq, Fraction(1)),
        delta_sq=min(delta_sq, Fraction(1)),
        raw_r_sq=r_sq,
        raw_delta_sq=delta_sq,
    )


# ---------------------------------------------------------------------------
# consistency grouping
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConsistencyGroup:
    anchor: Token                # token whose position is being labeled
    multiset: Multiset
    label: int
    members: tuple              # sequence indices (next-token) or (i, k) pairs


def _fmt_key(key) -> str:
    anchor, ms = key
    tok = "(" + ", ".join(str(c.as_fraction()) for c in anchor) + ")"
    counts = ", ".join(
        f"{'(' + ', '.join(str(c.as_fraction()) for c in t) + ')'}x{cnt}"
        for t, cnt in ms.entries)
    return f"token {tok} in multiset {{{counts}}}"


def consistency_groups(sequences: Sequence[Sequence[Token]], labels, mode: str):
    """Collapse inputs into labeled (token, multiset) groups or fail loudly."""
    groups: dict[tuple, list] = {}
    group_label: dict[tuple, int] = {}
    first_member: dict[tuple, object] = {}
    multisets = [sequence_to_multiset(seq) for seq in sequences]

    def add(key, label, member):
        if key in group_label:
            if group_label[key] != label:
                raise ConsistencyError(
                    f"inputs {first_member[key]} and {member} share the key "
                    f"[{_fmt_key(key)}] but have labels "
                    f"{group_label[key]} != {label}",
                    first=first_member[key], second=member)
            groups[key].append(member)
        else:
            group_label[key] = label
            groups[key] = [member]
            first_member[key] = member

    if mode == "next_token":
        for i, seq in enumerate(sequences):
            key = (seq[-1], multisets[i])
            add(key, labels[i], i)
    elif mode == "seq2seq":
        for i, seq in enumerate(sequences):
            for k, tok in enumerate(seq):
                key = (tok, multisets[i])
                add(key, labels[i][k], (i, k))
    else:
        raise ValueError(f"unknown mode {mode!r}")

    ordered = sorted(groups, key=lambda key: (token_key(key[0]), multiset_key(key[1])))
    return [ConsistencyGroup(anchor=key[0], multiset=key[1],
                             label=group_label[key], members=tuple(groups[key]))
            for key in ordered]


# ---------------------------------------------------------------------------
# restriction set (greedy induction)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RestrictionSet:
    elements: tuple[Token, ...]


def restriction_set(multisets: Sequence[Multiset]) -> RestrictionSet:
    """A set A, |A| <= N, on which the multisets' counts already differ.

    Processes multisets in order; on a collision with an earlier multiset,
    adds the lexicographically smallest token whose counts differ.
    """
    if len(set(multisets)) != len(multisets):
        raise NotDistinct("input multisets are not pairwise distinct")
    members: list[Token] = []

    def keys(upto: int) -> dict[tuple[int, ...], int]:
        table = {}
        for idx in range(upto):
            table[multisets[idx].restrict_key(members)] = idx
        return table

    for k in range(1, len(multisets)):
        table = keys(k)
        key = multisets[k].restrict_key(members)
        if key not in table:
            continue
        other = multisets[table[key]]
        candidates = sorted(
            set(other.support()) | set(multisets[k].support()), key=token_key)
        for tok in candidates:
            if other.count(tok) != multisets[k].count(tok):
                members.append(tok)
                break
        else:
            raise NotDistinct("multisets compare equal while marked distinct")
    members.sort(key=token_key)
    # direct pairwise re-check of the invariant
    final = {m.restrict_key(members) for m in multisets}
    if len(final) != len(multisets):
        raise AssertionError("restriction set failed to separate the multisets")
    return RestrictionSet(tuple(members))


# ---------------------------------------------------------------------------
# projection-vector search
# ---------------------------------------------------------------------------

_PI_LADDER = (64, 256, 1024)


def _pi_bounds_at(prec: int) -> tuple[Fraction, Fraction]:
    return PI.enclosure(prec)


def _integerize(points: Sequence[tuple[Fraction, ...]]) -> tuple[list[tuple[int, ...]], int]:
    den = 1
    for vec in points:
        for c in vec:
            den = den * c.denominator // math.gcd(den, c.denominator)
    ints = [tuple(int(c * den) for c in vec) for vec in points]
    return ints, den


def _quantize_direction(raw: Sequence[int], frac_bits: int) -> tuple[Dyadic, ...] | None:
    """Round raw/||raw|| toward zero so the result has L2 norm <= 1 exactly."""
    s = sum(g * g for g in raw)
    if s == 0:
        return None
    root = math.isqrt(s)
    if root * root < s:
        root += 1
    out = []
    for g in raw:
        mag = (abs(g) << frac_bits) // root
        out.append(Dyadic(-mag if g < 0 else mag, frac_bits))
    return tuple(out)


def _verify_projection(v: Sequence[Dyadic], pts: list[tuple[int, ...]], dim: int,
                       cardinality: int) -> bool:
    """Exact check of the pairwise projection inequalities (integer form)."""
    fb = max(c.exp for c in v) if v else 0
    vi = [c.num << (fb - c.exp) for c in v]
    if sum(x * x for x in vi) > 1 << (2 * fb):
        return False
    scale = 1 << (2 * fb)
    x4 = cardinality ** 4
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            diff = [a - b for a, b in zip(pts[i], pts[j])]
            norm_sq = sum(d * d for d in diff)
            if norm_sq == 0:
                continue
            dot = sum(a * b for a, b in zip(vi, diff))
            if dot == 0:
                return False
            if dot * dot > norm_sq * scale:
                return False
            # lower bound: dot^2 * d * |X|^4 * pi >= 8 * norm_sq * 2^(2 fb)
            lhs_coeff = dot * dot * dim * x4
            rhs = 8 * norm_sq * scale
            decided = None
            for prec in _PI_LADDER:
                pi_lo, pi_hi = _pi_bounds_at(prec)
                if lhs_coeff * pi_lo.numerator >= rhs * pi_lo.denominator:
                    decided = True
                    break
                if lhs_coeff * pi_hi.numerator < rhs * pi_hi.denominator:
                    decided = False
                    break
            if not decided:
                return False
    return True


def default_frac_bits(v_count: int, dim: int) -> int:
    """Quantization budget for the projection direction.

    The pairwise lower bound has a 1/|X|^2 * sqrt(8/(pi d)) margin, so the
    direction only needs ~2 log2 V + log2 d bits plus guard to survive
    rounding; a flat high precision would needlessly dominate the
    per-parameter bit complexity of small instances.
    """
    from .numerics import bit_len
    return 2 * bit_len(max(v_count, 2)) + bit_len(max(dim, 2)) + 12


def norm_slack(dim: int, frac_bits: int) -> Fraction:
    """Documented quantization slack: accepted directions satisfy
    1 - norm_slack <= ||v||^2 <= 1."""
    return Fraction(dim + 1, 1 << max(frac_bits - 6, 1))


def find_projection_vector(points: Sequence[Sequence], dim: int,
                           seed: str | int = 0, retries: int = 1024,
                           frac_bits: int | None = None) -> tuple[Dyadic, ...]:
    """Unit-ish direction v with |v.(x - x')| within the pairwise bounds.

    Seeded Gaussian-like sampling (sum of 12 dyadic uniforms per coordinate)
    with exact post-quantization verification, then a deterministic fallback
    sweeping pair-difference directions and coordinate axes.  With no
    explicit frac_bits the budget starts at default_frac_bits and doubles
    (capped at 128) across the retry schedule.
    """
    vecs = []
    seen = set()
    for p in points:
        v = _as_fraction_vector(p)
        if len(v) != dim:
            raise ValueError(f"point dim {len(v)} != {dim}")
        if v not in seen:
            seen.add(v)
            vecs.append(v)
    e1 = tuple([Dyadic(1)] + [Dyadic(0)] * (dim - 1))
    if len(vecs) <= 1:
        return e1
    if dim == 1:
        return (Dyadic(1),)

    ints, _ = _integerize(vecs)
    cardinality = len(vecs)
    if frac_bits is None:
        base = default_frac_bits(cardinality, dim)
        ladder = [base, min(2 * base, 128), min(4 * base, 128)]
    else:
        ladder = [frac_bits]
    rng = random.Random(f"{seed}:projection")

    def acceptable(v, bits):
        if v is None:
            return False
        if sum(c.as_fraction() ** 2 for c in v) < 1 - norm_slack(dim, bits):
            return False
        return _verify_projection(v, ints, dim, cardinality)

    per_stage = max(1, retries // len(ladder))
    for bits in ladder:
        unit = 1 << bits
        for _ in range(per_stage):
            raw = [sum(rng.getrandbits(bits) for _ in range(12)) - 6 * unit
                   for _ in range(dim)]
            v = _quantize_direction(raw, bits)
            if acceptable(v, bits):
                return v
    # deterministic fallback: pair differences, then axes
    bits = ladder[-1]
    for i in range(len(ints)):
        for j in range(i + 1, len(ints)):
            diff = [a - b for a, b in zip(ints[i], ints[j])]
            v = _quantize_direction(diff, bits)
            if acceptable(v, bits):
                return v
    for axis in range(dim):
        v = tuple(Dyadic(1 if t == axis else 0) for t in range(dim))
        if _verify_projection(v, ints, dim, cardinality):
            return v
    raise SearchExhausted(
        f"no projection direction found for {cardinality} points in dim {dim}")


# ---------------------------------------------------------------------------
# separating function (integer sequence ids)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SeparatingFunction:
    table: tuple[tuple[Token, int], ...]   # token -> positive integer, g-ordered
    range_bound: int                       # ceil(4 N^2 |S| sqrt(pi))
    sums: tuple[int, ...]                  # weighted sum per input multiset

    def value(self, token: Token) -> int:
        for tok, val in self.table:
            if tok == token:
                return val
        return 0

    def as_dict(self) -> dict[Token, int]:
        return dict(self.table)

    def to_json(self) -> dict:
        return {
            "range_bound": self.range_bound,
            "values": {str(idx + 1): val for idx, (_, val) in enumerate(self.table)},
        }


def separating_function(multisets: Sequence[Multiset], A: RestrictionSet,
                        seed: str | int = 0, retries: int = 16) -> SeparatingFunction:
    """Integer table on A whose weighted multiset sums are far apart.

    Verifies, in exact arithmetic, that the sums are pairwise at least
    sqrt(|S|) apart and bounded by 4 M N^2 |S| sqrt(pi) before returning;
    on failure the projection direction is redrawn.
    """
    n_multisets = len(multisets)
    support = set()
    for m in multisets:
        support.update(m.support())
    S = tuple(tok for tok in A.elements if tok in support)
    if not S:
        if len(set(multisets)) != n_multisets:
            raise NotDistinct("multisets are not distinct")
        return SeparatingFunction(table=(), range_bound=0,
                                  sums=tuple(0 for _ in multisets))

    reps = [m.restrict_key(S) for m in multisets]
    if len(set(reps)) != n_multisets:
        raise NotDistinct("restricted multisets are not pairwise distinct")

    size_s = len(S)
    cap_m = max(m.cardinality for m in multisets)
    scale = CertifiedReal.of(n_multisets**2 * size_s) * CertifiedReal.sqrt(PI)
    shift = certified_floor(2 * scale)
    range_bound = certified_ceil(4 * scale)
    mag_sq_bound = Fraction((4 * cap_m * n_multisets**2 * size_s) ** 2) * PI

    for attempt in range(retries):
        v = find_projection_vector(reps, size_s, seed=f"{seed}:sep:{attempt}")
        values = [certified_ceil(scale * coord) + shift for coord in v]
        sums = [sum(cnt * val for cnt, val in zip(rep, values)) for rep in reps]
        ok = all(1 <= val <= range_bound for val in values)
        if ok:
            for i in range(n_multisets):
                if not certified_le(Fraction(sums[i] ** 2), mag_sq_bound):
                    ok = False
                    break
                for j in range(i + 1, n_multisets):
                    if (sums[i] - sums[j]) ** 2 < size_s:
                        ok = False
                        break
                if not ok:
                    break
        if ok:
            return SeparatingFunction(table=tuple(zip(S, values)),
                                      range_bound=range_bound, sums=tuple(sums))
    raise SearchExhausted("separating function verification kept failing")
