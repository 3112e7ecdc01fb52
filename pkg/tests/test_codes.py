"""Code constructions: identities, counts, weights, serialization."""

from __future__ import annotations

import numpy as np
import pytest

from qecdec import gf2
from qecdec.codes import (
    attention_mask,
    build_code,
    class_bits,
    code_from_text,
    code_to_text,
    depolarizing_problem,
    index_to_bits,
    logical_class,
    sector_problem,
    syndrome,
    validate_code,
)

FAMILIES = [
    ("toric", 2),
    ("toric", 3),
    ("toric", 4),
    ("rotated_surface", 3),
    ("rotated_surface", 5),
    ("repetition", 3),
    ("repetition", 5),
]


@pytest.mark.parametrize("name,L", FAMILIES)
def test_stabilizer_identities(name, L):
    code = build_code(name, L)
    validate_code(code)
    if code.hx.shape[0]:
        assert not gf2.matmul(code.hx, code.hz.T).any()
        assert not gf2.matmul(code.lz, code.hx.T).any()
    assert not gf2.matmul(code.lx, code.hz.T).any()
    # symplectic pairing: logical X_i anticommutes exactly with logical Z_i
    pairing = gf2.matmul(code.lx, code.lz.T)
    assert np.array_equal(pairing, np.eye(code.k, dtype=np.uint8))


@pytest.mark.parametrize("name,L", FAMILIES)
def test_generator_counts(name, L):
    code = build_code(name, L)
    if name == "toric":
        assert code.n == 2 * L * L
        assert code.k == 2
        assert code.hx.shape[0] == code.hz.shape[0] == L * L - 1
    elif name == "rotated_surface":
        assert code.n == L * L
        assert code.k == 1
        assert code.hx.shape[0] == code.hz.shape[0] == (L * L - 1) // 2
    else:
        assert code.n == L
        assert code.k == 1
        assert code.hx.shape[0] == 0
        assert code.hz.shape[0] == L - 1
    # independent generators, correct encoded-qubit count
    total_rank = gf2.rank(code.hx) + gf2.rank(code.hz)
    assert total_rank == code.hx.shape[0] + code.hz.shape[0]
    assert code.n - total_rank == code.k


def test_toric_stabilizer_weights():
    code = build_code("toric", 3)
    assert set(code.hx.sum(axis=1)) == {4}
    assert set(code.hz.sum(axis=1)) == {4}
    # each edge sits in at most two stars and two plaquettes
    assert code.hx.sum(axis=0).max() <= 2
    assert code.hz.sum(axis=0).max() <= 2


def test_rotated_boundary_weights():
    code = build_code("rotated_surface", 5)
    for h in (code.hx, code.hz):
        weights = sorted(set(h.sum(axis=1)))
        assert weights == [2, 4]
    # distance-L logicals
    assert code.lx.sum() == 5
    assert code.lz.sum() == 5


def test_repetition_structure():
    code = build_code("repetition", 4)
    assert np.array_equal(
        code.hz,
        np.array([[1, 1, 0, 0], [0, 1, 1, 0], [0, 0, 1, 1]], dtype=np.uint8),
    )
    assert code.lx.sum() == 4  # all-ones logical X
    assert code.lz.sum() == 1


def test_build_code_rejects_bad_input():
    with pytest.raises(ValueError):
        build_code("toric", 1)
    with pytest.raises(ValueError):
        build_code("rotated_surface", 4)
    with pytest.raises(ValueError):
        build_code("unknown_family", 3)


@pytest.mark.parametrize("name,L", [("toric", 2), ("rotated_surface", 3), ("repetition", 3)])
def test_sector_problem_ranks(name, L):
    code = build_code(name, L)
    sectors = ["x"] if name == "repetition" else ["x", "z"]
    for sector in sectors:
        problem = sector_problem(code, sector)
        assert problem.kind == "sector"
        stacked = np.concatenate([problem.h_eff, problem.l_eff], axis=0)
        assert gf2.rank(stacked) == problem.m + problem.n_log
        # trivially-acting generator rows span the exact kernel of [H; L]
        stab = problem.stabilizer_rows
        for row in stab:
            assert not gf2.matvec(stacked, row).any()
        g = problem.n_err - problem.m - problem.n_log
        assert gf2.rank(stab) == g == gf2.nullspace_basis(stacked).shape[0]


def test_repetition_z_sector_rejected():
    code = build_code("repetition", 3)
    with pytest.raises(ValueError):
        sector_problem(code, "z")


def test_depolarizing_blocks():
    code = build_code("rotated_surface", 3)
    problem = depolarizing_problem(code)
    n = code.n
    assert problem.n_err == 2 * n
    assert problem.n_classes == 4
    # Z checks act on the e_x half only, X checks on the e_z half only
    mz = code.hz.shape[0]
    assert np.array_equal(problem.h_eff[:mz, :n], code.hz)
    assert not problem.h_eff[:mz, n:].any()
    assert np.array_equal(problem.h_eff[mz:, n:], code.hx)
    assert not problem.h_eff[mz:, :n].any()
    stacked = np.concatenate([problem.h_eff, problem.l_eff], axis=0)
    for row in problem.stabilizer_rows:
        assert not gf2.matvec(stacked, row).any()


def test_syndrome_and_class_match_naive(rng=None):
    rng = np.random.default_rng(77)
    code = build_code("toric", 2)
    problem = sector_problem(code, "x")
    for _ in range(200):
        e = rng.integers(0, 2, size=problem.n_err).astype(np.uint8)
        s = syndrome(problem, e)
        manual = np.array(
            [int(np.bitwise_xor.reduce(problem.h_eff[i] & e)) for i in range(problem.m)],
            dtype=np.uint8,
        )
        assert np.array_equal(s, manual)
        bits = class_bits(problem, e)
        idx = logical_class(problem, e)
        assert np.array_equal(index_to_bits(idx, problem.n_log), bits)


def test_logical_class_is_linear():
    rng = np.random.default_rng(3)
    problem = sector_problem(build_code("toric", 2), "x")
    for _ in range(100):
        a = rng.integers(0, 2, size=problem.n_err).astype(np.uint8)
        b = rng.integers(0, 2, size=problem.n_err).astype(np.uint8)
        assert logical_class(problem, a ^ b) == logical_class(problem, a) ^ logical_class(
            problem, b
        )


def test_index_to_bits_range():
    with pytest.raises(ValueError):
        index_to_bits(4, 2)
    assert np.array_equal(index_to_bits(3, 2), [1, 1])
    assert np.array_equal(index_to_bits(2, 2), [0, 1])


def test_attention_mask_contract():
    problem = sector_problem(build_code("rotated_surface", 3), "x")
    allow = attention_mask(problem)
    m = problem.m
    assert allow.shape == (m + 1, m + 1)
    assert allow.dtype == np.bool_
    assert allow[0].all() and allow[:, 0].all()
    gram = gf2.integer_gram(problem.h_eff)
    for i in range(m):
        for j in range(m):
            assert allow[i + 1, j + 1] == (gram[i, j] > 0)
    assert allow.T.tolist() == allow.tolist()  # shared support is symmetric
    assert allow.diagonal().all()  # nonempty checks always see themselves


def test_code_text_round_trip():
    for name, L in [("toric", 2), ("rotated_surface", 3), ("repetition", 4)]:
        code = build_code(name, L)
        back = code_from_text(code_to_text(code))
        assert back.name == code.name
        assert np.array_equal(back.hx, code.hx)
        assert np.array_equal(back.hz, code.hz)
        assert np.array_equal(back.lx, code.lx)
        assert np.array_equal(back.lz, code.lz)


def test_code_text_golden():
    text = code_to_text(build_code("repetition", 3))
    assert text.splitlines()[0] == "name=repetition L=3 n=3 k=1 m=2"
