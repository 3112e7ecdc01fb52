"""Constraint-projected nullspace descent.

Neural flip logits are only suggestions; this module turns them into a
recovery that exactly satisfies both constraint blocks

    H e = s   (syndrome checks)     A e = c   (predicted class bits)

by working in the coset geometry of the stacked map H_aug = [H; A].

Projection: given any starting guess e_pred, the residual
y = b XOR H_aug e_pred is mapped back through a fixed pseudo-inverse B
(H_aug B = I), and e_pred XOR B y lands in the feasible coset.

Descent: the coset is e' XOR span(N) where the rows of N span the
nullspace of H_aug (exactly the stabilizers acting trivially on both
blocks).  With per-bit costs w_q = -log(p_q / (1 - p_q)) from the flip
probabilities, one pass visits each generator in storage order and XORs
it in exactly when that strictly lowers the weighted cost: writing
sigma_q = 1 - 2 e_q, the cost change of generator j is
delta_j = sum_{q in supp(j)} w_q sigma_q, applied iff delta_j < 0.
Feasibility is untouched because generators are nullspace elements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import gf2
from .codes import DecodingProblem, index_to_bits
from .model import hard_decision, predict_class

__all__ = [
    "CpndContext",
    "DecodeResult",
    "build_context",
    "weights_from_logits",
    "weighted_cost",
    "project",
    "descend",
    "decode",
]

PROB_CLAMP = 1e-9  # flip probabilities clamped to [PROB_CLAMP, 1 - PROB_CLAMP]
MAX_PASSES = 10


@dataclass(frozen=True)
class CpndContext:
    """Precomputed algebra for one decoding problem.

    h_aug stacks checks over logical rows; b_left satisfies
    h_aug @ b_left = I; basis rows span the nullspace of h_aug.
    """

    problem: DecodingProblem
    h_aug: np.ndarray
    b_left: np.ndarray
    basis: np.ndarray
    basis_mode: str
    supports: tuple[np.ndarray, ...]


def build_context(problem: DecodingProblem, basis_mode: str = "exact_kernel") -> CpndContext:
    """Assemble projection and descent structures for a problem.

    basis_mode "exact_kernel" computes the nullspace of [H; A] directly;
    "stabilizer_rows" reuses the code's trivially-acting generator rows,
    validated to span that same nullspace.
    """
    h_aug = np.concatenate([problem.h_eff, problem.l_eff], axis=0)
    b_left = gf2.left_inverse(h_aug)  # raises when rows are dependent
    g = problem.n_err - (problem.m + problem.n_log)
    if basis_mode == "exact_kernel":
        basis = gf2.nullspace_basis(h_aug)
    elif basis_mode == "stabilizer_rows":
        if problem.stabilizer_rows is None:
            raise ValueError("problem carries no stabilizer rows")
        basis = gf2.as_bit_matrix(problem.stabilizer_rows)
        if np.any(gf2.matmul(h_aug, basis.T)):
            raise ValueError("stabilizer rows leave the nullspace of [H; A]")
        if gf2.rank(basis) != g:
            raise ValueError(f"stabilizer rows span rank {gf2.rank(basis)}, nullspace needs {g}")
    else:
        raise ValueError(f"unknown basis_mode {basis_mode!r}")
    if basis.shape[0] != g:
        raise ValueError(f"nullspace basis has {basis.shape[0]} rows, expected {g}")
    supports = tuple(np.nonzero(row)[0] for row in basis)
    return CpndContext(
        problem=problem,
        h_aug=h_aug,
        b_left=b_left,
        basis=basis,
        basis_mode=basis_mode,
        supports=supports,
    )


def weights_from_logits(flip_logits: np.ndarray) -> np.ndarray:
    """Per-bit descent costs w_q = -log(p_q / (1 - p_q)), probabilities clamped.

    Since p_q is the logit's sigmoid, clamping p to [c, 1-c] and taking
    the negated log-odds is exactly clipping the logit; no exp needed.
    """
    logits = np.asarray(flip_logits, dtype=np.float64)
    bound = -math.log(PROB_CLAMP / (1.0 - PROB_CLAMP))
    return -np.clip(logits, -bound, bound)


def weighted_cost(e: np.ndarray, w: np.ndarray) -> float:
    """Total cost sum_q w_q e_q of an error string."""
    return float(w @ np.asarray(e, dtype=np.float64))


def project(ctx: CpndContext, e_pred: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Closest graft of e_pred onto the coset satisfying h_aug e = b."""
    e_pred = gf2.as_bit_vector(e_pred)
    y = gf2.matvec(ctx.h_aug, e_pred) ^ gf2.as_bit_vector(b)
    return e_pred ^ gf2.matvec(ctx.b_left, y)


def descend(
    ctx: CpndContext, e: np.ndarray, w: np.ndarray, passes: int = 1
) -> tuple[np.ndarray, int]:
    """Greedy nullspace descent from e; returns (endpoint, accepted moves).

    Each pass sweeps the generators once in storage order, XORing in a
    generator exactly when its cost change is strictly negative.  Extra
    passes (capped at MAX_PASSES) repeat until a sweep accepts nothing.
    """
    if not 1 <= passes <= MAX_PASSES:
        raise ValueError(f"passes must be in [1, {MAX_PASSES}]")
    e = gf2.as_bit_vector(e).copy()
    sigma = 1.0 - 2.0 * e.astype(np.float64)
    accepted = 0
    for _ in range(passes):
        moved = False
        for support in ctx.supports:
            delta = float(w[support] @ sigma[support])
            if delta < 0.0:
                e[support] ^= 1
                sigma[support] = -sigma[support]
                accepted += 1
                moved = True
        if not moved:
            break
    return e, accepted


@dataclass(frozen=True)
class DecodeResult:
    """Recovery plus provenance of how it was reached."""

    recovery: np.ndarray
    projected: np.ndarray
    e_pred: np.ndarray
    class_pred: int
    accepted_moves: int


def decode(
    ctx: CpndContext,
    flip_logits: np.ndarray,
    class_logits: np.ndarray,
    syndrome_bits: np.ndarray,
    passes: int = 1,
) -> DecodeResult:
    """Full post-processing: targets, hard decision, projection, descent.

    passes=0 skips descent and returns the projection itself (the
    baseline the descent is measured against).
    """
    problem = ctx.problem
    class_pred = int(predict_class(class_logits)[0])
    b = np.concatenate(
        [gf2.as_bit_vector(syndrome_bits), index_to_bits(class_pred, problem.n_log)]
    )
    e_pred = hard_decision(np.asarray(flip_logits, dtype=np.float64).reshape(-1))
    projected = project(ctx, e_pred, b)
    if passes == 0:
        recovery, accepted = projected, 0
    else:
        w = weights_from_logits(flip_logits)
        recovery, accepted = descend(ctx, projected, w, passes=passes)
    return DecodeResult(
        recovery=recovery,
        projected=projected,
        e_pred=e_pred,
        class_pred=class_pred,
        accepted_moves=accepted,
    )
