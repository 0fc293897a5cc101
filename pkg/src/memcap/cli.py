"""Command-line front door: synthesize, verify, sweep, generate.

Exit codes: 0 success, 1 I/O or usage error, 2 label inconsistency,
3 synthesis failure, 4 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

from .dataset import (
    IDS,
    MULTISET,
    VECTOR,
    Dataset,
    gen_id_dataset,
    gen_multiset_family,
    gen_vector_dataset,
    load_dataset,
    save_dataset,
)
from .errors import (
    ConsistencyError,
    MemcapError,
    PrecisionExhausted,
    SchemaError,
    SearchExhausted,
)
from .ir import SynthesisReport, accounting
from .transformer import (
    synthesize_deepset,
    synthesize_embedding,
    synthesize_next_token,
    synthesize_next_token_limited_bits,
    synthesize_seq2seq,
)
from .verify import ledger_for_dataset, verify_bounds, verify_memorization
from .weights import load_weights, save_weights

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONSISTENCY = 2
EXIT_SYNTHESIS = 3
EXIT_VERIFY = 4

VARIANTS = ("next-token", "seq2seq", "deepset", "embedding", "limited-bits")


def _synthesize(ds: Dataset, variant: str, seed: int, bits_budget: int | None):
    if variant == "next-token":
        if ds.kind != VECTOR or ds.mode != "next_token":
            raise SchemaError("next-token synthesis needs a vector next_token dataset")
        return synthesize_next_token(ds.vector_sequences(), list(ds.labels), seed=seed)
    if variant == "seq2seq":
        if ds.kind != VECTOR or ds.mode != "seq2seq":
            raise SchemaError("seq2seq synthesis needs a vector seq2seq dataset")
        return synthesize_seq2seq(ds.vector_sequences(),
                                  [list(row) for row in ds.labels], seed=seed)
    if variant == "deepset":
        if ds.kind != MULTISET:
            raise SchemaError("deepset synthesis needs a multiset dataset")
        return synthesize_deepset([list(ms) for ms in ds.sequences],
                                  list(ds.labels), seed=seed)
    if variant == "embedding":
        if ds.kind != IDS:
            raise SchemaError("embedding synthesis needs an ids dataset")
        return synthesize_embedding([list(s) for s in ds.sequences],
                                    list(ds.labels), ds.vocab_size, seed=seed)
    if variant == "limited-bits":
        if ds.kind != VECTOR or ds.mode != "next_token":
            raise SchemaError("limited-bits synthesis needs a vector next_token dataset")
        if bits_budget is None:
            raise SchemaError("limited-bits synthesis needs --bits-budget")
        root = math.isqrt(ds.n_sequences)
        if root * root < ds.n_sequences:
            root += 1
        if not 1 <= bits_budget <= root:
            raise SchemaError(f"--bits-budget must lie in [1, {root}]")
        return synthesize_next_token_limited_bits(
            ds.vector_sequences(), list(ds.labels), bits_budget, seed=seed)
    raise SchemaError(f"unknown variant {variant!r}")


_CHANNEL_LAYOUTS = {
    "next-token": "ff1 stacks: [sequence-id net (12) | fingerprint thread | zero pad]; "
                  "attention writes mean(ch1) into ch3; ff2 decodes (id, fp, mean)",
    "seq2seq": "ff1 stacks: [sequence-id net (12) | fingerprint thread | zero pad]; "
               "attention writes mean(ch1) into ch3; ff2 decodes (id, fp, mean)",
    "limited-bits": "ff1 stacks: [sequence-id chain (12) | group accumulator | "
                    "fingerprint thread | zero pad]; ff2 threads its own accumulator",
    "deepset": "phi: sequence-id net (12); rho: scalar memorizer (12)",
    "embedding": "lookup columns (table value, token id, 0); ff2 decodes "
                 "(value, id, mean)",
}


def _header(ds: Dataset, report: SynthesisReport, variant: str, seed: int) -> dict:
    from .separation import check_separated
    params = check_separated(ds.all_tokens())
    return {
        "variant": variant,
        "N": ds.n_sequences,
        "n": ds.seq_len,
        "d": ds.dim,
        "C": ds.num_classes,
        "seed": seed,
        "r_measured": list(params.r.decimal_bounds(digits=12)),
        "delta_measured": list(params.delta.decimal_bounds(digits=12)),
        "bound_ledger": report.ledger_decimal(),
        "bit_budget": report.extras.get("bit_budget"),
        "channel_layout": _CHANNEL_LAYOUTS.get(variant, ""),
    }


def cmd_synthesize(args) -> int:
    try:
        ds = load_dataset(args.input)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        model, report = _synthesize(ds, args.variant, args.seed, args.bits_budget)
    except ConsistencyError as exc:
        print(f"inconsistent labels: {exc}", file=sys.stderr)
        return EXIT_CONSISTENCY
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SearchExhausted, PrecisionExhausted, MemcapError) as exc:
        print(f"synthesis failed: {exc}", file=sys.stderr)
        return EXIT_SYNTHESIS
    save_weights(args.out, model, header=_header(ds, report, args.variant, args.seed))
    report_path = args.report or (str(args.out) + ".report.json")
    Path(report_path).write_text(json.dumps(report.to_json(), indent=1))
    print(f"wrote {args.out} and {report_path}: width={report.width} "
          f"depth={report.depth} params={report.param_count} "
          f"max_bits={report.max_bit_complexity}")
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        model, header = load_weights(args.weights)
        ds = load_dataset(args.input)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        report_out = verify_memorization(model, ds)
    except MemcapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    variant = header.get("variant", "next-token")
    measured = accounting(model)
    measured.extras.update(N=ds.n_sequences, n=ds.seq_len, C=ds.num_classes,
                           d=ds.dim, bit_budget=header.get("bit_budget"),
                           vocab_size=ds.vocab_size)
    try:
        measured.bound_ledger = ledger_for_dataset(ds, variant)
        report_out.bound_checks = verify_bounds(measured, variant)
    except MemcapError as exc:
        print(f"bound evaluation failed: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(json.dumps(report_out.to_json(), indent=1))
    if not report_out.memorization_ok:
        print(f"memorization FAILED at input {report_out.counterexample}",
              file=sys.stderr)
        return EXIT_VERIFY
    if not report_out.all_passed:
        print("bound checks FAILED", file=sys.stderr)
        return EXIT_VERIFY
    print("verification passed")
    return EXIT_OK


def cmd_sweep(args) -> int:
    try:
        grid = [int(x) for x in args.grid.split(",") if x]
        seeds = [int(x) for x in args.seeds.split(",") if x]
    except ValueError:
        print("error: --grid and --seeds must be comma-separated integers",
              file=sys.stderr)
        return EXIT_USAGE
    rows = []
    for n_seqs in grid:
        for seed in seeds:
            row = {"N": n_seqs, "seed": seed, "params": "", "depth": "",
                   "width": "", "max_bits": "", "status": "ok"}
            try:
                ds = gen_vector_dataset(n_seqs, args.n, args.d, args.C, seed,
                                        mode=args.mode)
                model, report = _synthesize(
                    ds, args.variant, seed,
                    args.bits_budget if args.variant == "limited-bits" else None)
                row.update(params=report.param_count, depth=report.depth,
                           width=report.width, max_bits=report.max_bit_complexity)
                if args.check:
                    audit = verify_memorization(model, ds)
                    if not audit.memorization_ok:
                        row["status"] = "memorization_failed"
            except SearchExhausted:
                row["status"] = "retry_exhausted"
            except MemcapError as exc:
                row["status"] = f"error:{type(exc).__name__}"
            rows.append(row)
    fields = ["N", "seed", "params", "depth", "width", "max_bits", "status"]
    out = Path(args.out)
    with out.open("w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {out} ({len(rows)} rows)")
    return EXIT_OK


def cmd_shatter(args) -> int:
    try:
        ds = load_dataset(args.input)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    from .verify import shatter_sweep, write_shatter_csv
    try:
        summary = shatter_sweep(ds, seed=args.seed)
    except MemcapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    write_shatter_csv(summary, args.out)
    print(f"{summary['successes']}/{summary['total']} labelings memorized "
          f"exactly; max params {summary['max_params']}; rows in {args.out}")
    return EXIT_OK if summary["successes"] == summary["total"] else EXIT_VERIFY


def cmd_generate(args) -> int:
    try:
        if args.kind == VECTOR:
            ds = gen_vector_dataset(args.N, args.n, args.d, args.C, args.seed,
                                    mode=args.mode,
                                    distinct_tokens=args.distinct_tokens)
        elif args.kind == IDS:
            ds = gen_id_dataset(args.N, args.n, args.vocab_size, args.C, args.seed)
        else:
            ds = gen_multiset_family(args.N, args.max_cardinality, args.d, args.C,
                                     args.seed)
    except MemcapError as exc:
        print(f"generation failed: {exc}", file=sys.stderr)
        return EXIT_USAGE
    save_dataset(args.out, ds)
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="memcap",
        description="Compile labeled sequence datasets into exactly-evaluable "
                    "network weights that provably memorize the data.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="compile a dataset into weights")
    p.add_argument("--input", required=True)
    p.add_argument("--variant", choices=VARIANTS, default="next-token")
    p.add_argument("--bits-budget", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--report", default=None)
    p.set_defaults(run=cmd_synthesize)

    p = sub.add_parser("verify", help="audit weights against a dataset")
    p.add_argument("--weights", required=True)
    p.add_argument("--input", required=True)
    p.set_defaults(run=cmd_verify)

    p = sub.add_parser("sweep", help="scaling sweep over dataset sizes")
    p.add_argument("--grid", required=True, help="comma-separated N values")
    p.add_argument("--seeds", default="0")
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--C", type=int, default=4)
    p.add_argument("--mode", choices=("next_token", "seq2seq"), default="next_token")
    p.add_argument("--variant", choices=VARIANTS, default="next-token")
    p.add_argument("--bits-budget", type=int, default=None)
    p.add_argument("--check", action="store_true",
                   help="also verify memorization per row")
    p.add_argument("--out", required=True)
    p.set_defaults(run=cmd_sweep)

    p = sub.add_parser("shatter", help="synthesize every binary labeling of a "
                                       "fixed input set (N <= 12)")
    p.add_argument("--input", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(run=cmd_shatter)

    p = sub.add_parser("generate", help="emit a seeded random dataset")
    p.add_argument("--kind", choices=(VECTOR, IDS, MULTISET), default=VECTOR)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--C", type=int, default=4)
    p.add_argument("--vocab-size", type=int, default=8)
    p.add_argument("--max-cardinality", type=int, default=4)
    p.add_argument("--mode", choices=("next_token", "seq2seq"), default="next_token")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--distinct-tokens", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(run=cmd_generate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.run(args)


if __name__ == "__main__":
    sys.exit(main())
