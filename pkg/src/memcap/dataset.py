"""Dataset files and seeded generators.

Tokens in files are decimal strings parsed exactly; non-dyadic decimals are
rejected rather than rounded.  Generators draw tokens from integer lattices,
so generated data is token-wise separated by construction, and reject key
collisions so any labeling is consistent.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import RangeError, SchemaError
from .numerics import Dyadic
from .separation import Multiset, Token, check_separated, sequence_to_multiset

VECTOR = "vector"
IDS = "ids"
MULTISET = "multiset"


@dataclass
class Dataset:
    kind: str                   # vector | ids | multiset
    mode: str                   # next_token | seq2seq (vector/ids)
    sequences: tuple            # token tuples, id tuples, or jagged multisets
    labels: tuple
    vocab_size: int | None = None
    declared_c: int | None = None
    declared_r: Dyadic | None = None
    declared_delta: Dyadic | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_sequences(self) -> int:
        return len(self.sequences)

    @property
    def seq_len(self) -> int:
        return len(self.sequences[0]) if self.sequences else 0

    @property
    def dim(self) -> int:
        if self.kind == IDS:
            return 1
        return len(self.sequences[0][0]) if self.sequences else 0

    @property
    def num_classes(self) -> int:
        if self.declared_c is not None:
            return self.declared_c
        if self.mode == "seq2seq":
            return max(max(row) for row in self.labels)
        return max(self.labels)

    def all_tokens(self) -> list[Token]:
        if self.kind == VECTOR:
            return [tok for seq in self.sequences for tok in seq]
        if self.kind == IDS:
            return [(Dyadic(t),) for seq in self.sequences for t in seq]
        return [tok for ms in self.sequences for tok in ms]

    def vector_sequences(self) -> list[list[Token]]:
        if self.kind == VECTOR:
            return [list(seq) for seq in self.sequences]
        if self.kind == IDS:
            return [[(Dyadic(t),) for t in seq] for seq in self.sequences]
        raise SchemaError("multiset datasets have no sequence view")


def _parse_token(entry, d: int) -> Token:
    if len(entry) != d:
        raise SchemaError(f"token has {len(entry)} coordinates, expected {d}")
    try:
        return tuple(Dyadic.parse_decimal(str(c)) for c in entry)
    except RangeError as exc:
        raise SchemaError(str(exc)) from exc


def _check_labels(labels, c_bound: int | None):
    for y in labels:
        if not isinstance(y, int) or y < 1:
            raise SchemaError(f"labels must be positive integers, got {y!r}")
        if c_bound is not None and y > c_bound:
            raise SchemaError(f"label {y} exceeds declared C = {c_bound}")


def load_dataset(path: str | Path) -> Dataset:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot read dataset {path}: {exc}") from exc
    return dataset_from_json(doc)


def dataset_from_json(doc: dict) -> Dataset:
    kind = doc.get("kind", VECTOR)
    mode = doc.get("mode", "next_token")
    if kind not in (VECTOR, IDS, MULTISET):
        raise SchemaError(f"unknown dataset kind {kind!r}")
    if mode not in ("next_token", "seq2seq"):
        raise SchemaError(f"unknown mode {mode!r}")
    declared_c = doc.get("C")
    try:
        raw_sequences = doc["sequences"]
        labels = doc["labels"]
    except KeyError as exc:
        raise SchemaError(f"dataset missing field {exc}") from exc
    if not raw_sequences:
        raise SchemaError("dataset has no sequences")
    n_declared = doc.get("N", len(raw_sequences))
    if n_declared != len(raw_sequences) or len(labels) != len(raw_sequences):
        raise SchemaError("N, sequences and labels disagree")

    if kind == VECTOR:
        d = doc.get("d", len(raw_sequences[0][0]))
        n = doc.get("n", len(raw_sequences[0]))
        sequences = []
        for seq in raw_sequences:
            if len(seq) != n:
                raise SchemaError("ragged sequence lengths")
            sequences.append(tuple(_parse_token(tok, d) for tok in seq))
        sequences = tuple(sequences)
    elif kind == IDS:
        omega = doc.get("vocab_size")
        if not isinstance(omega, int) or omega < 1:
            raise SchemaError("ids datasets need a positive vocab_size")
        n = doc.get("n", len(raw_sequences[0]))
        sequences = []
        for seq in raw_sequences:
            if len(seq) != n:
                raise SchemaError("ragged sequence lengths")
            if any(not isinstance(t, int) or not 1 <= t <= omega for t in seq):
                raise SchemaError("token ids must lie in [1, vocab_size]")
            sequences.append(tuple(seq))
        sequences = tuple(sequences)
    else:
        d = doc.get("d", len(raw_sequences[0][0]))
        sequences = tuple(tuple(_parse_token(tok, d) for tok in ms)
                          for ms in raw_sequences)

    if mode == "seq2seq":
        if kind == MULTISET:
            raise SchemaError("multiset datasets are next-token only")
        for row in labels:
            if len(row) != len(raw_sequences[0]):
                raise SchemaError("per-token labels must match sequence length")
            _check_labels(row, declared_c)
        labels = tuple(tuple(row) for row in labels)
    else:
        _check_labels(labels, declared_c)
        labels = tuple(labels)

    ds = Dataset(kind=kind, mode=mode, sequences=sequences, labels=labels,
                 vocab_size=doc.get("vocab_size"), declared_c=declared_c,
                 declared_r=_parse_optional(doc.get("r")),
                 declared_delta=_parse_optional(doc.get("delta")))
    _check_declared_separation(ds)
    return ds


def _parse_optional(text) -> Dyadic | None:
    if text is None:
        return None
    try:
        return Dyadic.parse_decimal(str(text))
    except RangeError as exc:
        raise SchemaError(str(exc)) from exc


def _check_declared_separation(ds: Dataset):
    if ds.declared_r is None and ds.declared_delta is None:
        return
    params = check_separated(ds.all_tokens())
    if ds.declared_r is not None:
        r_sq = ds.declared_r.as_fraction() ** 2
        if r_sq < params.raw_r_sq:
            raise SchemaError("declared r is below the measured token norm")
    if ds.declared_delta is not None:
        d_sq = ds.declared_delta.as_fraction() ** 2
        if params.raw_delta_sq is not None and d_sq > params.raw_delta_sq:
            raise SchemaError("declared delta exceeds the measured separation")


def dataset_to_json(ds: Dataset) -> dict:
    def fmt(x: Dyadic) -> str:
        f = x.as_fraction()
        if f.denominator == 1:
            return str(f.numerator)
        scaled = f.numerator * 5**x.exp
        text = str(abs(scaled)).rjust(x.exp + 1, "0")
        sign = "-" if scaled < 0 else ""
        return f"{sign}{text[:-x.exp]}.{text[-x.exp:]}"

    doc: dict = {"kind": ds.kind, "mode": ds.mode, "N": ds.n_sequences,
                 "labels": [list(row) if isinstance(row, tuple) else row
                            for row in ds.labels]}
    if ds.kind == VECTOR:
        doc["d"] = ds.dim
        doc["n"] = ds.seq_len
        doc["sequences"] = [[[fmt(c) for c in tok] for tok in seq]
                            for seq in ds.sequences]
    elif ds.kind == IDS:
        doc["n"] = ds.seq_len
        doc["vocab_size"] = ds.vocab_size
        doc["sequences"] = [list(seq) for seq in ds.sequences]
    else:
        doc["d"] = ds.dim
        doc["sequences"] = [[[fmt(c) for c in tok] for tok in ms]
                            for ms in ds.sequences]
    if ds.declared_c is not None:
        doc["C"] = ds.declared_c
    return doc


def save_dataset(path: str | Path, ds: Dataset) -> None:
    Path(path).write_text(json.dumps(dataset_to_json(ds), indent=1))


# ---------------------------------------------------------------------------
# seeded generators (integer lattice tokens => separated by construction)
# ---------------------------------------------------------------------------

def _lattice_pool(rng: random.Random, count: int, d: int) -> list[Token]:
    side = 1
    while (2 * side + 1) ** d < 4 * count:
        side += 1
    pool: set[tuple[int, ...]] = set()
    while len(pool) < count:
        pool.add(tuple(rng.randint(-side, side) for _ in range(d)))
    ordered = sorted(pool)
    rng.shuffle(ordered)
    return [tuple(Dyadic(c) for c in tok) for tok in ordered]


def _sequence_key(seq: Sequence[Token], mode: str):
    ms = sequence_to_multiset(seq)
    if mode == "next_token":
        return (seq[-1], ms)
    return ms


def gen_vector_dataset(n_sequences: int, seq_len: int, d: int, n_classes: int,
                       seed: int, mode: str = "next_token",
                       distinct_tokens: bool = False) -> Dataset:
    """Random (r, delta)-separated dataset with pairwise-distinct keys."""
    rng = random.Random(f"dataset:{seed}:{n_sequences}:{seq_len}:{d}:{mode}")
    if distinct_tokens:
        pool = _lattice_pool(rng, n_sequences * seq_len, d)
        sequences = [tuple(pool[i * seq_len:(i + 1) * seq_len])
                     for i in range(n_sequences)]
    else:
        pool = _lattice_pool(rng, max(4, 2 * seq_len, n_sequences), d)
        sequences = []
        seen_keys = set()
        attempts = 0
        while len(sequences) < n_sequences:
            attempts += 1
            if attempts > 200 * n_sequences:
                raise RangeError("could not draw enough distinct sequence keys")
            seq = tuple(rng.choice(pool) for _ in range(seq_len))
            key = _sequence_key(seq, "next_token")
            if key in seen_keys:
                continue
            seen_keys.add(key)
            sequences.append(seq)

    if mode == "next_token":
        labels = tuple(rng.randint(1, n_classes) for _ in sequences)
    else:
        by_key: dict = {}
        labels = []
        for seq in sequences:
            ms = sequence_to_multiset(seq)
            row = []
            for tok in seq:
                key = (tok, ms)
                if key not in by_key:
                    by_key[key] = rng.randint(1, n_classes)
                row.append(by_key[key])
            labels.append(tuple(row))
        labels = tuple(labels)
    return Dataset(kind=VECTOR, mode=mode, sequences=tuple(sequences),
                   labels=labels, declared_c=n_classes,
                   meta={"seed": seed, "distinct_tokens": distinct_tokens})


def gen_id_dataset(n_sequences: int, seq_len: int, vocab_size: int, n_classes: int,
                   seed: int) -> Dataset:
    rng = random.Random(f"ids:{seed}:{n_sequences}:{seq_len}:{vocab_size}")
    sequences = []
    seen = set()
    attempts = 0
    while len(sequences) < n_sequences:
        attempts += 1
        if attempts > 200 * n_sequences:
            raise RangeError("could not draw enough distinct id-sequence keys")
        seq = tuple(rng.randint(1, vocab_size) for _ in range(seq_len))
        key = (seq[-1], tuple(sorted(seq)))
        if key in seen:
            continue
        seen.add(key)
        sequences.append(seq)
    labels = tuple(rng.randint(1, n_classes) for _ in sequences)
    return Dataset(kind=IDS, mode="next_token", sequences=tuple(sequences),
                   labels=labels, vocab_size=vocab_size, declared_c=n_classes,
                   meta={"seed": seed})


def gen_multiset_family(n_sets: int, max_cardinality: int, d: int, n_classes: int,
                        seed: int) -> Dataset:
    rng = random.Random(f"multisets:{seed}:{n_sets}:{max_cardinality}:{d}")
    pool = _lattice_pool(rng, max(4, max_cardinality + n_sets), d)
    family = []
    seen = set()
    attempts = 0
    while len(family) < n_sets:
        attempts += 1
        if attempts > 200 * n_sets:
            raise RangeError("could not draw enough distinct multisets")
        card = rng.randint(1, max_cardinality)
        elements = tuple(rng.choice(pool) for _ in range(card))
        ms = Multiset.from_elements(elements)
        if ms in seen:
            continue
        seen.add(ms)
        family.append(tuple(elements))
    labels = tuple(rng.randint(1, n_classes) for _ in family)
    return Dataset(kind=MULTISET, mode="next_token", sequences=tuple(family),
                   labels=labels, declared_c=n_classes, meta={"seed": seed})
