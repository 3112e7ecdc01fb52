"""Oracle and baseline decoders: exact optimality, feasibility, degeneracy."""

from __future__ import annotations

import math

import numpy as np
import pytest

from qecdec import cpnd, gf2, reference
from qecdec.codes import (
    build_code,
    depolarizing_problem,
    index_to_bits,
    logical_class,
    sector_problem,
    syndrome,
)


def all_errors(n):
    return ((np.arange(2**n)[:, None] >> np.arange(n)) & 1).astype(np.uint8)


def independent_probs(errors, p):
    w = errors.sum(axis=1).astype(np.float64)
    n = errors.shape[1]
    return (p**w) * ((1 - p) ** (n - w))


def exact_success_probability(problem, p, decide):
    """Sum of error probabilities where decide(syndrome) hits the true class.

    decide maps syndrome bits to a predicted class index, so any decoder
    that only sees the syndrome can be scored exactly by enumeration.
    """
    errors = all_errors(problem.n_err)
    probs = independent_probs(errors, p)
    total = 0.0
    cache: dict[bytes, int] = {}
    for e, pr in zip(errors, probs):
        s = syndrome(problem, e)
        key = s.tobytes()
        if key not in cache:
            cache[key] = decide(s)
        if cache[key] == logical_class(problem, e):
            total += pr
    return total


@pytest.mark.parametrize("name,L", [("repetition", 3), ("toric", 2)])
def test_oracle_is_optimal_among_syndrome_decoders(name, L):
    """No syndrome-only decoder beats the exact ML oracle, computed exactly."""
    problem = sector_problem(build_code(name, L), "x")
    p = 0.11
    oracle = reference.OracleDecoder(problem, reference.ChannelPrior.independent(p, problem.n_err))
    ctx = cpnd.build_context(problem)
    prior_logit = math.log(p / (1 - p))
    flip = np.full(problem.n_err, prior_logit)

    def oracle_decide(s):
        return oracle.decode(s)[0]

    def projection_decide(s):
        cls = np.zeros(problem.n_classes)
        res = cpnd.decode(ctx, flip, cls, s, passes=0)
        return logical_class(problem, res.recovery)

    def cpnd_decide(s):
        cls = np.zeros(problem.n_classes)
        res = cpnd.decode(ctx, flip, cls, s, passes=cpnd.MAX_PASSES)
        return logical_class(problem, res.recovery)

    def minimum_weight_decide(s):
        errors = all_errors(problem.n_err)
        match = (errors @ problem.h_eff.T % 2 == s).all(axis=1)
        best = errors[match][np.argmin(errors[match].sum(axis=1))]
        return logical_class(problem, best)

    p_oracle = exact_success_probability(problem, p, oracle_decide)
    for rival in (projection_decide, cpnd_decide, minimum_weight_decide):
        assert p_oracle >= exact_success_probability(problem, p, rival) - 1e-12


def test_oracle_matches_analytic_repetition_rate():
    """Exact oracle failure rate equals the majority-vote formula."""
    problem = sector_problem(build_code("repetition", 3), "x")
    for p in (0.05, 0.1, 0.2):
        oracle = reference.OracleDecoder(
            problem, reference.ChannelPrior.independent(p, problem.n_err)
        )
        success = exact_success_probability(problem, p, lambda s: oracle.decode(s)[0])
        analytic_failure = 3 * p * p * (1 - p) + p**3
        assert success == pytest.approx(1.0 - analytic_failure, abs=1e-12)


def test_oracle_outputs_are_consistent():
    problem = depolarizing_problem(build_code("rotated_surface", 3))
    oracle = reference.OracleDecoder(problem, reference.ChannelPrior.depolarizing(0.1, 9))
    rng = np.random.default_rng(53)
    for _ in range(25):
        e = rng.integers(0, 2, size=problem.n_err).astype(np.uint8)
        s = syndrome(problem, e)
        best, representative, posterior = oracle.decode(s)
        assert posterior.shape == (problem.n_classes,)
        assert posterior.sum() == pytest.approx(1.0, rel=1e-12)
        assert best == int(posterior.argmax())
        assert np.array_equal(syndrome(problem, representative), s)
        assert logical_class(problem, representative) == best


def test_oracle_depolarizing_prefers_y_over_two_singles():
    """At one qubit, P(Y) = p/3 beats P(X)P(Z) terms when comparing cosets."""
    problem = depolarizing_problem(build_code("rotated_surface", 3))
    p = 0.1
    oracle = reference.OracleDecoder(problem, reference.ChannelPrior.depolarizing(p, 9))
    n = 9
    e = np.zeros(problem.n_err, dtype=np.uint8)
    e[0] = e[n] = 1  # a Y error on qubit 0
    logw_y = oracle._log_weights(e[None, :])[0]
    manual = 8 * math.log(1 - p) + math.log(p / 3)
    assert logw_y == pytest.approx(manual, rel=1e-12)


def test_oracle_size_cap():
    problem = sector_problem(build_code("toric", 4), "x")
    with pytest.raises(ValueError):
        reference.OracleDecoder(problem, reference.ChannelPrior.independent(0.1, problem.n_err))


def test_ml_oracle_decode_one_shot():
    problem = sector_problem(build_code("repetition", 3), "x")
    prior = reference.ChannelPrior.independent(0.1, 3)
    best, rep, post = reference.ml_oracle_decode(problem, np.array([1, 0], dtype=np.uint8), prior)
    # syndrome (1,0) at low p: single flip on qubit 0 is most likely
    assert np.array_equal(rep, [1, 0, 0])
    assert best == logical_class(problem, rep)


def test_osd0_feasibility_and_ranking():
    problem = sector_problem(build_code("rotated_surface", 3), "x")
    ctx = cpnd.build_context(problem)
    rng = np.random.default_rng(59)
    for _ in range(300):
        flip = rng.normal(0, 2.5, size=problem.n_err)
        b = rng.integers(0, 2, size=ctx.h_aug.shape[0]).astype(np.uint8)
        e = reference.osd0_decode(ctx, flip, b)
        assert np.array_equal(gf2.matvec(ctx.h_aug, e), b)


def test_osd0_places_support_on_likely_bits():
    """A clearly-flagged bit should carry the solution when consistent."""
    problem = sector_problem(build_code("repetition", 5), "x")
    ctx = cpnd.build_context(problem)
    e_true = np.array([0, 0, 1, 0, 0], dtype=np.uint8)
    s = syndrome(problem, e_true)
    b = np.concatenate([s, index_to_bits(logical_class(problem, e_true), 1)])
    flip = np.full(5, -4.0)
    flip[2] = 4.0
    assert np.array_equal(reference.osd0_decode(ctx, flip, b), e_true)


def test_osd0_degenerates_to_projection_on_flat_logits():
    """Equal reliabilities: stable sort keeps storage order, so OSD-0
    solves on the same leftmost pivot set the pseudo-inverse uses."""
    for problem in (
        sector_problem(build_code("toric", 2), "x"),
        sector_problem(build_code("toric", 4), "x"),
        sector_problem(build_code("rotated_surface", 3), "x"),
    ):
        ctx = cpnd.build_context(problem)
        rng = np.random.default_rng(61)
        flip = np.full(problem.n_err, math.log(0.1 / 0.9))
        for _ in range(50):
            b = rng.integers(0, 2, size=ctx.h_aug.shape[0]).astype(np.uint8)
            osd = reference.osd0_decode(ctx, flip, b)
            proj = cpnd.project(ctx, np.zeros(problem.n_err, dtype=np.uint8), b)
            assert np.array_equal(osd, proj)


def test_projection_only_decode_matches_cpnd_projection():
    problem = sector_problem(build_code("rotated_surface", 3), "x")
    ctx = cpnd.build_context(problem)
    rng = np.random.default_rng(67)
    for _ in range(100):
        flip = rng.normal(0, 2, size=problem.n_err)
        cls = rng.normal(0, 1, size=problem.n_classes)
        s = rng.integers(0, 2, size=problem.m).astype(np.uint8)
        rec = reference.projection_only_decode(ctx, flip, cls, s)
        res = cpnd.decode(ctx, flip, cls, s, passes=0)
        assert np.array_equal(rec, res.recovery)


def test_is_logical_success_detects_stabilizers_and_logicals():
    code = build_code("toric", 2)
    problem = sector_problem(code, "x")
    rng = np.random.default_rng(71)
    stab = problem.stabilizer_rows
    # a logical X string changes the class the logical Z rows read off
    flipper = code.lx[0]
    assert logical_class(problem, flipper) != 0
    for _ in range(50):
        e = rng.integers(0, 2, size=problem.n_err).astype(np.uint8)
        coeffs = rng.integers(0, 2, size=stab.shape[0]).astype(np.uint8)
        wash = (coeffs.astype(np.int64) @ stab.astype(np.int64) % 2).astype(np.uint8)
        assert reference.is_logical_success(problem, e, e ^ wash)
        assert not reference.is_logical_success(problem, e, e ^ wash ^ flipper)
