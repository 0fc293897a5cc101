"""Edge regimes: fractional tokens, d=1, n=1, label extremes."""

from fractions import Fraction

from memcap.ir import eval_transformer
from memcap.numerics import Dyadic
from memcap.transformer import synthesize_next_token, synthesize_seq2seq
from memcap.verify import brute_force_context_check, verify_memorization
from memcap.dataset import Dataset, VECTOR

D = Dyadic


def as_dataset(seqs, labels, mode="next_token"):
    return Dataset(kind=VECTOR, mode=mode, sequences=tuple(tuple(s) for s in seqs),
                   labels=tuple(labels))


def test_fractional_dyadic_tokens():
    """Sub-integer coordinates give delta < 1 and exercise the clamping."""
    a = (D.parse_decimal("1.25"), D.parse_decimal("-0.5"))
    b = (D.parse_decimal("0.75"), D.parse_decimal("0.25"))
    c = (D.parse_decimal("-1.5"), D.parse_decimal("2"))
    d = (D.parse_decimal("0.125"), D.parse_decimal("-2.75"))
    seqs = [[a, b, c], [b, c, d], [d, a, b], [c, d, a]]
    labels = [2, 1, 3, 1]
    model, report = synthesize_next_token(seqs, labels, seed=123)
    assert report.width == 14
    for seq, y in zip(seqs, labels):
        assert eval_transformer(model, seq)[-1] == y
    ds = as_dataset(seqs, labels)
    assert verify_memorization(model, ds).memorization_ok
    assert brute_force_context_check(model, ds)


def test_one_dimensional_tokens():
    seqs = [[(D(0),), (D(3),)], [(D(3),), (D(7),)], [(D(7),), (D(0),)]]
    labels = [1, 2, 3]
    model, _ = synthesize_next_token(seqs, labels, seed=5)
    for seq, y in zip(seqs, labels):
        assert eval_transformer(model, seq)[-1] == y


def test_single_token_sequences():
    seqs = [[(D(0), D(1))], [(D(2), D(0))], [(D(-1), D(-1))]]
    labels = [3, 1, 2]
    model, _ = synthesize_next_token(seqs, labels, seed=6)
    for seq, y in zip(seqs, labels):
        out = eval_transformer(model, seq)
        assert len(out) == 1 and out[0] == y


def test_power_of_two_and_large_labels():
    seqs = [[(D(0), D(0)), (D(4), D(0))], [(D(4), D(0)), (D(0), D(4))],
            [(D(0), D(4)), (D(0), D(0))]]
    model, _ = synthesize_next_token(seqs, [4, 2, 4], seed=7)
    for seq, y in zip(seqs, [4, 2, 4]):
        assert eval_transformer(model, seq)[-1] == y
    big, _ = synthesize_next_token(seqs, [100, 1, 64], seed=8)
    for seq, y in zip(seqs, [100, 1, 64]):
        assert eval_transformer(big, seq)[-1] == y


def test_seq2seq_fractional_tokens():
    a = (D.parse_decimal("0.5"),)
    b = (D.parse_decimal("1.75"),)
    c = (D.parse_decimal("-0.25"),)
    seqs = [[a, b], [b, c]]
    labels = [[1, 2], [2, 3]]
    model, _ = synthesize_seq2seq(seqs, labels, seed=9)
    for seq, row in zip(seqs, labels):
        assert eval_transformer(model, seq) == [Fraction(y) for y in row]
