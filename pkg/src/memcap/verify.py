"""Independent audits: exact memorization checks, bound regression, sweeps.

Nothing here shares routing logic with synthesis; memorization is certified
purely by exact forward passes through the IR evaluator, and bound checks
compare measured resources against frozen-constant formula values from the
committed bound manifest.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources

from .dataset import IDS, MULTISET, VECTOR, Dataset
from .errors import RangeError, SchemaError
from .ir import (
    DeepSetModel,
    EmbeddingTransformerModel,
    SynthesisReport,
    TransformerModel,
    eval_deepset,
    eval_embedding_transformer,
    eval_transformer,
    eval_transformer_contexts,
)
from .numerics import CertifiedReal, PI, certified_le, certified_lt
from .separation import check_separated, sequence_to_multiset
from .transformer import build_context_stage, synthesize_next_token

_WIDTH_TABLE = {
    "next-token": 14,
    "seq2seq": 14,
    "limited-bits": 15,
    "deepset": 12,
}


def load_manifest() -> dict:
    text = resources.files("memcap.data").joinpath("bound_manifest.json").read_text()
    return json.loads(text)


@dataclass
class BoundCheck:
    name: str
    measured: str
    bound: str
    passed: bool

    def to_json(self) -> dict:
        return {"name": self.name, "measured": self.measured,
                "bound": self.bound, "passed": self.passed}


@dataclass
class VerificationReport:
    memorization_ok: bool
    per_input_residuals: list
    bound_checks: list[BoundCheck] = field(default_factory=list)
    counterexample: int | None = None

    @property
    def all_passed(self) -> bool:
        return self.memorization_ok and all(c.passed for c in self.bound_checks)

    def to_json(self) -> dict:
        return {
            "memorization_ok": self.memorization_ok,
            "per_input_residuals": [str(r) for r in self.per_input_residuals],
            "bound_checks": [c.to_json() for c in self.bound_checks],
            "counterexample": self.counterexample,
        }


# ---------------------------------------------------------------------------
# exact memorization audit
# ---------------------------------------------------------------------------

def verify_memorization(model, ds: Dataset) -> VerificationReport:
    """Zero-tolerance exact comparison of model outputs against labels."""
    residuals = []
    counterexample = None
    if isinstance(model, TransformerModel) and ds.kind == VECTOR:
        sequences = ds.vector_sequences()
        for i, seq in enumerate(sequences):
            outs = eval_transformer(model, seq)
            if ds.mode == "next_token":
                res = [outs[-1] - ds.labels[i]]
            else:
                res = [outs[k] - ds.labels[i][k] for k in range(len(seq))]
            residuals.extend(res)
            if counterexample is None and any(r != 0 for r in res):
                counterexample = i
    elif isinstance(model, EmbeddingTransformerModel) and ds.kind == IDS:
        for i, seq in enumerate(ds.sequences):
            out = eval_embedding_transformer(model, seq)[-1]
            res = out - ds.labels[i]
            residuals.append(res)
            if counterexample is None and res != 0:
                counterexample = i
    elif isinstance(model, DeepSetModel) and ds.kind == MULTISET:
        for i, elements in enumerate(ds.sequences):
            res = eval_deepset(model, [list(tok) for tok in elements]) - ds.labels[i]
            residuals.append(res)
            if counterexample is None and res != 0:
                counterexample = i
    else:
        raise SchemaError(
            f"cannot verify {type(model).__name__} against a {ds.kind} dataset")
    ok = all(r == 0 for r in residuals)
    return VerificationReport(memorization_ok=ok, per_input_residuals=residuals,
                              counterexample=counterexample)


# ---------------------------------------------------------------------------
# bound regression against the frozen manifest
# ---------------------------------------------------------------------------

def _cert_max(a: CertifiedReal, b: CertifiedReal) -> CertifiedReal:
    if a.is_rational() and b.is_rational():
        return a if a.const >= b.const else b
    return a if certified_lt(b, a) else b


def ledger_for_dataset(ds: Dataset, variant: str) -> dict:
    """Recompute the bound ledger from a dataset alone (verification side)."""
    from .transformer import _ledger
    params = check_separated(ds.all_tokens())
    n_seqs = ds.n_sequences
    r = CertifiedReal.sqrt(params.r_sq)
    delta_inv = 1 / CertifiedReal.sqrt(params.delta_sq)
    if variant == "deepset":
        cap_m = max(len(ms) for ms in ds.sequences)
        d = ds.dim
        return {"R": 80 * cap_m**2 * n_seqs**5 * r * delta_inv * PI
                     * CertifiedReal.sqrt(d),
                "C": CertifiedReal.of(ds.num_classes)}
    if variant == "embedding":
        omega = ds.vocab_size or 1
        return {"R": 200 * CertifiedReal.sqrt(3) * ds.seq_len**2 * omega
                     * n_seqs**5 * omega * PI,
                "C": CertifiedReal.of(ds.num_classes)}
    return _ledger(params, max(ds.seq_len, 1), ds.dim, n_seqs, ds.num_classes)


def _bound_repr(expr: CertifiedReal) -> str:
    lo, hi = expr.decimal_bounds(digits=6, prec=128)
    return f"[{lo}, {hi}]"


def verify_bounds(report: SynthesisReport, variant: str,
                  manifest: dict | None = None) -> list[BoundCheck]:
    """Width equalities plus depth/bit-complexity <= frozen-constant formulas."""
    manifest = manifest or load_manifest()
    checks: list[BoundCheck] = []
    want_width = _WIDTH_TABLE.get(variant)
    if want_width is not None:
        checks.append(BoundCheck("width", str(report.width), f"== {want_width}",
                                 report.width == want_width))

    n_data = report.extras.get("N")
    c_max = max(report.extras.get("C", 1), 2)
    d = max(report.extras.get("d", 1), 2)
    big_r = report.bound_ledger.get("R")
    if n_data is None or big_r is None:
        return checks
    if variant == "seq2seq":
        # per-position memorization scales in n * N, not N
        n_data = n_data * max(report.extras.get("n", 1), 1)
    maxlog = _cert_max(CertifiedReal.log2(big_r), CertifiedReal.log2(c_max))
    lg_n = CertifiedReal.log2(max(n_data, 2))

    if variant == "limited-bits":
        budget = max(report.extras.get("bit_budget") or 1, 1)
        lg_b = CertifiedReal.log2(max(budget, 2))
        depth_formula = (n_data * CertifiedReal.sqrt(lg_b) * Fraction(1, budget)
                         + CertifiedReal.of(Fraction(n_data, budget)) / CertifiedReal.sqrt(lg_b)
                         * maxlog)
        bits_formula = (CertifiedReal.log2(d)
                        + budget / CertifiedReal.sqrt(lg_b) * maxlog)
        c_depth = manifest["depth_c_limited"]
        c_bits = manifest["bits_c_limited"]
    else:
        depth_formula = (CertifiedReal.sqrt(n_data * lg_n)
                         + CertifiedReal.sqrt(n_data / lg_n) * maxlog)
        bits_formula = CertifiedReal.log2(d) + CertifiedReal.sqrt(n_data / lg_n) * maxlog
        c_depth = manifest["depth_c"]
        c_bits = manifest["bits_c"]

    depth_bound = Fraction(c_depth).limit_denominator(10**6) * depth_formula
    bits_bound = Fraction(c_bits).limit_denominator(10**6) * bits_formula
    checks.append(BoundCheck("depth", str(report.depth), _bound_repr(depth_bound),
                             certified_le(report.depth, depth_bound)))
    checks.append(BoundCheck("max_bit_complexity", str(report.max_bit_complexity),
                             _bound_repr(bits_bound),
                             certified_le(report.max_bit_complexity, bits_bound)))
    if variant == "embedding":
        omega = report.extras.get("vocab_size", 0)
        param_formula = omega + CertifiedReal.sqrt(n_data * lg_n) \
            + CertifiedReal.sqrt(n_data / lg_n) * maxlog
        c_params = manifest.get("param_c_embedding", 0)
        if c_params:
            bound = Fraction(c_params).limit_denominator(10**6) * param_formula
            checks.append(BoundCheck("param_count", str(report.param_count),
                                     _bound_repr(bound),
                                     certified_le(report.param_count, bound)))
    return checks


# ---------------------------------------------------------------------------
# contextual-mapping audit (all pairs, exact)
# ---------------------------------------------------------------------------

def brute_force_context_check(model: TransformerModel, ds: Dataset,
                              report_gaps: dict | None = None) -> bool:
    """Check both contextual-mapping conditions on the post-attention ids.

    Distinct (token, sequence-multiset) keys must sit at L2 distance >= 1/n
    and every context id must have norm at most 20 r n^2 N^3 sqrt(pi d) / delta.
    All comparisons are exact.
    """
    sequences = ds.vector_sequences()
    n = ds.seq_len
    n_seqs = ds.n_sequences
    params = check_separated(ds.all_tokens())
    d = ds.dim
    r = CertifiedReal.sqrt(params.r_sq)
    delta_inv = 1 / CertifiedReal.sqrt(params.delta_sq)
    bound = 20 * r * n**2 * n_seqs**3 * delta_inv * CertifiedReal.sqrt(d * PI)
    bound_sq = bound * bound

    entries = []
    for i, seq in enumerate(sequences):
        ms = sequence_to_multiset(seq)
        cols = eval_transformer_contexts(model, seq)
        for k, tok in enumerate(seq):
            entries.append(((tok, ms), cols[k]))

    gap_sq_min = None
    for idx in range(len(entries)):
        key_a, vec_a = entries[idx]
        norm_sq = sum(c * c for c in vec_a)
        if not certified_le(norm_sq, bound_sq):
            return False
        for jdx in range(idx + 1, len(entries)):
            key_b, vec_b = entries[jdx]
            if key_a == key_b:
                continue
            dist_sq = sum((a - b) ** 2 for a, b in zip(vec_a, vec_b))
            if dist_sq < Fraction(1, n * n):
                return False
            if gap_sq_min is None or dist_sq < gap_sq_min:
                gap_sq_min = dist_sq
    if report_gaps is not None:
        report_gaps["min_gap_sq"] = gap_sq_min
        report_gaps["required_gap_sq"] = Fraction(1, n * n)
    return True


# ---------------------------------------------------------------------------
# shatter sweep (every binary labeling of a fixed input set)
# ---------------------------------------------------------------------------

def shatter_sweep(ds: Dataset, seed: int = 0, max_n: int = 12) -> dict:
    """Synthesize and exactly verify one model per binary labeling.

    Binary labels {0, 1} are encoded as classes {1, 2} since output 0 is
    reserved for the zero tail of the memorizing networks.
    """
    n_seqs = ds.n_sequences
    if n_seqs > max_n:
        raise RangeError(f"shatter sweep capped at {max_n} sequences, got {n_seqs}")
    sequences = ds.vector_sequences()
    stage = build_context_stage(sequences, [1] * n_seqs, "next_token",
                                seed=f"shatter:{seed}")
    rows = []
    successes = 0
    max_params = 0
    for index in range(1 << n_seqs):
        labels = [1 + ((index >> i) & 1) for i in range(n_seqs)]
        model, report = synthesize_next_token(sequences, labels,
                                              seed=f"shatter:{seed}:{index}",
                                              stage=stage)
        ok = True
        for seq, label in zip(sequences, labels):
            if eval_transformer(model, seq)[-1] != label:
                ok = False
                break
        successes += ok
        max_params = max(max_params, report.param_count)
        rows.append({"N": n_seqs, "labeling_index": index,
                     "params": report.param_count, "depth": report.depth,
                     "max_bits": report.max_bit_complexity, "ok": ok})
    return {"total": 1 << n_seqs, "successes": successes,
            "max_params": max_params, "rows": rows}


def write_shatter_csv(summary: dict, path) -> None:
    """Emit the sweep rows as CSV: N, labeling_index, params, depth, max_bits, ok."""
    import csv
    from pathlib import Path
    fields = ["N", "labeling_index", "params", "depth", "max_bits", "ok"]
    with Path(path).open("w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=fields)
        writer.writeheader()
        writer.writerows(summary["rows"])


def fit_scaling_slope(points: list[tuple[int, int]]) -> float:
    """Least-squares slope of log2(param_count) against log2(N)."""
    xs = [math.log2(n) for n, _ in points]
    ys = [math.log2(p) for _, p in points]
    mean_x = sum(xs) / len(xs)
    mean_y = sum(ys) / len(ys)
    num = sum((x - mean_x) * (y - mean_y) for x, y in zip(xs, ys))
    den = sum((x - mean_x) ** 2 for x in xs)
    return num / den
