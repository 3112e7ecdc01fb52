"""Reference decoders: exact maximum likelihood and ordered-statistics.

The maximum-likelihood oracle enumerates the full solution set of
H e = s as one particular solution XOR the span of ker(H), accumulates
the channel probability of every member into its logical class, and
returns the argmax class.  Cost is 2^(n_err - m) per decode, so its use
is capped at n_err <= 20.  It is the gold standard every other decoder
is measured against.

OSD-0 is the classic order-0 ordered-statistics baseline on the stacked
constraint matrix: columns are ranked by flip probability (most likely
flipped first, ties by column index), elimination picks the first
independent columns as the pivot set, every non-pivot coordinate is
frozen at its hard decision, and the pivot coordinates are solved
exactly.  Informative logits concentrate the support of the output on
the bits most likely to be wrong.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import gf2
from .codes import DecodingProblem, logical_class
from .cpnd import CpndContext, decode as cpnd_decode
from .model import hard_decision

__all__ = [
    "ChannelPrior",
    "OracleDecoder",
    "ml_oracle_decode",
    "osd0_decode",
    "projection_only_decode",
    "is_logical_success",
]

ORACLE_MAX_BITS = 20
_TINY = 1e-300  # floor for log of structurally zero channel probabilities


@dataclass(frozen=True)
class ChannelPrior:
    """Per-bit or per-qubit error probabilities for likelihood weighting.

    kind "independent": probs has shape (n_err,), the flip probability
    of each error bit.  kind "depolarizing": probs has shape (n_q, 4)
    with columns (I, X, Z, Y) summing to one per qubit.
    """

    kind: str
    probs: np.ndarray

    @classmethod
    def independent(cls, p: float, n_err: int) -> "ChannelPrior":
        return cls(kind="independent", probs=np.full(n_err, float(p)))

    @classmethod
    def depolarizing(cls, p: float, n_qubits: int) -> "ChannelPrior":
        row = np.array([1.0 - p, p / 3.0, p / 3.0, p / 3.0])
        return cls(kind="depolarizing", probs=np.tile(row, (n_qubits, 1)))


class OracleDecoder:
    """Exact ML decoding of one problem; precomputes the coset span."""

    def __init__(self, problem: DecodingProblem, prior: ChannelPrior):
        if problem.n_err > ORACLE_MAX_BITS:
            raise ValueError(
                f"oracle enumeration capped at {ORACLE_MAX_BITS} bits, got {problem.n_err}"
            )
        self.problem = problem
        self.prior = prior
        kernel = gf2.nullspace_basis(problem.h_eff)
        g = kernel.shape[0]
        coeffs = ((np.arange(2**g)[:, None] >> np.arange(g)) & 1).astype(np.uint8)
        self._span = (coeffs.astype(np.int64) @ kernel.astype(np.int64) & 1).astype(np.uint8)
        self._pseudo_inv = gf2.left_inverse(problem.h_eff)
        if prior.kind == "independent":
            if prior.probs.shape != (problem.n_err,):
                raise ValueError("independent prior needs one probability per error bit")
            p = np.clip(prior.probs, _TINY, 1.0 - _TINY)
            self._llr = np.log(p) - np.log1p(-p)
        elif prior.kind == "depolarizing":
            if problem.kind != "symplectic" or prior.probs.shape != (problem.n_err // 2, 4):
                raise ValueError("depolarizing prior needs (n_qubits, 4) probabilities")
            self._log_probs = np.log(np.clip(prior.probs, _TINY, 1.0))
        else:
            raise ValueError(f"unknown prior kind {prior.kind!r}")

    def _log_weights(self, errors: np.ndarray) -> np.ndarray:
        if self.prior.kind == "independent":
            return errors.astype(np.float64) @ self._llr
        n_q = self.problem.n_err // 2
        pauli = errors[:, :n_q].astype(np.int64) + 2 * errors[:, n_q:].astype(np.int64)
        return self._log_probs[np.arange(n_q)[None, :], pauli].sum(axis=1)

    def decode(self, syndrome_bits: np.ndarray) -> tuple[int, np.ndarray, np.ndarray]:
        """Return (best class, max-probability representative, class posterior)."""
        s = gf2.as_bit_vector(syndrome_bits)
        offset = gf2.matvec(self._pseudo_inv, s)
        errors = self._span ^ offset
        logw = self._log_weights(errors)
        cls_bits = (errors.astype(np.int64) @ self.problem.l_eff.T.astype(np.int64)) & 1
        classes = cls_bits @ (1 << np.arange(self.problem.n_log, dtype=np.int64))
        weights = np.exp(logw - logw.max())
        posterior = np.bincount(classes, weights=weights, minlength=self.problem.n_classes)
        posterior /= posterior.sum()
        best = int(posterior.argmax())
        in_class = np.nonzero(classes == best)[0]
        representative = errors[in_class[np.argmax(logw[in_class])]]
        return best, representative, posterior


def ml_oracle_decode(
    problem: DecodingProblem, syndrome_bits: np.ndarray, prior: ChannelPrior
) -> tuple[int, np.ndarray, np.ndarray]:
    """One-shot exact ML decode; build an OracleDecoder for repeated use."""
    return OracleDecoder(problem, prior).decode(syndrome_bits)


def osd0_decode(ctx: CpndContext, flip_logits: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Order-0 ordered-statistics solve of h_aug e = b guided by flip logits."""
    logits = np.asarray(flip_logits, dtype=np.float64).reshape(-1)
    h = ctx.h_aug
    r = h.shape[0]
    if logits.shape[0] != h.shape[1]:
        raise ValueError("one logit per error bit required")
    p = 1.0 / (1.0 + np.exp(-logits))
    order = np.argsort(-p, kind="stable")  # ties keep ascending column index
    _, pivot_sorted = gf2.rref(h[:, order])
    pivot_cols = order[np.array(pivot_sorted[:r], dtype=np.int64)]
    mask = np.zeros(h.shape[1], dtype=bool)
    mask[pivot_cols] = True
    e = hard_decision(logits)
    e[mask] = 0  # freeze non-pivot bits only, solve for the pivot set
    rhs = gf2.as_bit_vector(b) ^ gf2.matvec(h, e)
    x = gf2.solve(h[:, pivot_cols], rhs)
    if x is None:  # impossible: the pivot set is a basis of the row space
        raise RuntimeError("OSD-0 pivot system inconsistent")
    e[pivot_cols] = x
    return e


def projection_only_decode(
    ctx: CpndContext,
    flip_logits: np.ndarray,
    class_logits: np.ndarray,
    syndrome_bits: np.ndarray,
) -> np.ndarray:
    """The projection baseline: feasible graft of the hard decision, no descent."""
    return cpnd_decode(ctx, flip_logits, class_logits, syndrome_bits, passes=0).recovery


def is_logical_success(problem: DecodingProblem, e_true: np.ndarray, recovery: np.ndarray) -> bool:
    """True when recovery undoes the error up to a stabilizer."""
    residual = gf2.as_bit_vector(e_true) ^ gf2.as_bit_vector(recovery)
    return logical_class(problem, residual) == 0
