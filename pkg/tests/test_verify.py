"""Verification module: audits, bound regression, sweeps."""

import pytest

from memcap.dataset import Dataset, VECTOR, gen_vector_dataset
from memcap.errors import RangeError
from memcap.ir import TransformerModel, affine, mlp
from memcap.numerics import Dyadic
from memcap.transformer import (
    _merge_ff1,
    _zero_phi,
    synthesize_next_token,
)
from memcap.verify import (
    brute_force_context_check,
    fit_scaling_slope,
    load_manifest,
    shatter_sweep,
    verify_bounds,
    verify_memorization,
)

D = Dyadic


@pytest.fixture(scope="module")
def synthesized():
    ds = gen_vector_dataset(8, 3, 2, 3, seed=3)
    model, report = synthesize_next_token(ds.vector_sequences(), list(ds.labels),
                                          seed=3)
    return ds, model, report


def test_verify_fresh_model(synthesized):
    ds, model, _ = synthesized
    report = verify_memorization(model, ds)
    assert report.memorization_ok
    assert report.counterexample is None
    assert all(r == 0 for r in report.per_input_residuals)


def test_verify_detects_perturbation(synthesized):
    ds, model, _ = synthesized
    # perturb one ff2 bias by 2^-10
    bad_layers = list(model.ff2.layers)
    last = bad_layers[-1]
    bumped = affine([list(r) for r in last.weights],
                    [last.bias[0] + D(1, 10)], last.activation)
    bad = TransformerModel(e_in=model.e_in, ff1=model.ff1, ua=model.ua,
                           ff2=mlp(bad_layers[:-1] + [bumped]),
                           e_out=model.e_out, mode=model.mode)
    report = verify_memorization(bad, ds)
    assert not report.memorization_ok
    assert report.counterexample is not None


def test_verify_empty_dataset_is_vacuous():
    ds = Dataset(kind=VECTOR, mode="next_token", sequences=(), labels=())
    from memcap.transformer import _identity_layer, build_attention
    dummy = TransformerModel(e_in=_identity_layer(1),
                             ff1=mlp([affine([[D(0)], [D(0)], [D(0)]],
                                             [D(0)] * 3)]),
                             ua=build_attention(),
                             ff2=mlp([affine([[D(0), D(0), D(0)]], [D(0)])]),
                             e_out=_identity_layer(1))
    report = verify_memorization(dummy, ds)
    assert report.memorization_ok


def test_bound_checks_pass_on_reference(synthesized):
    _, _, report = synthesized
    checks = verify_bounds(report, "next-token")
    assert [c.name for c in checks] == ["width", "depth", "max_bit_complexity"]
    assert all(c.passed for c in checks)


def test_bound_checks_catch_regressions(synthesized):
    _, _, report = synthesized
    tight = dict(load_manifest())
    tight["depth_c"] = 0.0001
    tight["bits_c"] = 0.0001
    checks = verify_bounds(report, "next-token", manifest=tight)
    failed = {c.name for c in checks if not c.passed}
    assert "depth" in failed and "max_bit_complexity" in failed


def test_context_check_passes_and_fails(synthesized):
    ds, model, _ = synthesized
    assert brute_force_context_check(model, ds)

    # zero out the sequence-id channel: distinct multisets with a shared last
    # token now collide, so the check must reject
    seqs = ds.vector_sequences()
    from memcap.separation import check_separated, sequence_to_multiset, token_key
    from memcap.ffn import project_net
    tokens = sorted({t for s in seqs for t in s}, key=token_key)
    params = check_separated(tokens)
    emb = project_net(tokens, params=params, seed="zeroed")
    broken_ff1 = _merge_ff1(_zero_phi(ds.dim, 12), emb.net)
    broken = TransformerModel(e_in=model.e_in, ff1=broken_ff1, ua=model.ua,
                              ff2=model.ff2, e_out=model.e_out, mode=model.mode)
    msets = {sequence_to_multiset(s) for s in seqs}
    shared_last = len({(s[-1], sequence_to_multiset(s)) for s in seqs})
    if len(msets) > 1 and shared_last < sum(1 for s in seqs for _ in s):
        assert not brute_force_context_check(broken, ds)


def test_context_check_single_sequence_vacuous():
    ds = gen_vector_dataset(1, 3, 2, 2, seed=0)
    model, _ = synthesize_next_token(ds.vector_sequences(), list(ds.labels), seed=0)
    assert brute_force_context_check(model, ds)


def test_shatter_sweep_n3():
    ds = gen_vector_dataset(3, 2, 2, 2, seed=1, distinct_tokens=True)
    summary = shatter_sweep(ds, seed=1)
    assert summary["total"] == 8
    assert summary["successes"] == 8
    assert len(summary["rows"]) == 8
    assert all(row["ok"] for row in summary["rows"])


def test_shatter_sweep_cap():
    ds = gen_vector_dataset(13, 2, 2, 2, seed=1, distinct_tokens=True)
    with pytest.raises(RangeError):
        shatter_sweep(ds, seed=1)


def test_fit_scaling_slope_recovers_power_law():
    points = [(16, 4 * 16), (32, 4 * 32), (64, 4 * 64)]
    assert abs(fit_scaling_slope(points) - 1.0) < 1e-9
    points = [(n, int(50 * n**0.5)) for n in (16, 32, 64, 128)]
    assert abs(fit_scaling_slope(points) - 0.5) < 0.02
