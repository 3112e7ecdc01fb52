"""Pauli noise sampling.

Every sample owns an independent counter-based random stream keyed by
(seed, domain, index), so batches are reproducible bit for bit no matter
how samples are ordered or partitioned across workers.  Philox keys are
two 64-bit words: word 0 mixes the user seed with a small domain tag,
word 1 is the sample index.

Supported channels:

independent    each error bit flips i.i.d. with probability p; used on
               sector problems, where bits are one Pauli species.
depolarizing   each qubit is hit with probability p, the Pauli drawn
               uniformly from {X, Y, Z}; used on symplectic problems,
               where X -> (1, 0), Z -> (0, 1), Y -> (1, 1) in (e_x | e_z).

When p_range is set instead of p, each sample first draws its own p
uniformly from the range (curriculum used during training).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codes import DecodingProblem, logical_class, syndrome

__all__ = [
    "NoiseSpec",
    "Batch",
    "error_stream",
    "sample_error",
    "make_batch",
    "batch_is_consistent",
]

DOMAIN_TRAIN = 0
DOMAIN_EVAL = 1
DOMAIN_INIT = 2

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class NoiseSpec:
    """Noise channel description: model plus either a fixed p or a p range."""

    model: str
    p: float | None = None
    p_range: tuple[float, float] | None = None

    def __post_init__(self):
        if self.model not in ("independent", "depolarizing"):
            raise ValueError(f"unknown noise model {self.model!r}")
        if (self.p is None) == (self.p_range is None):
            raise ValueError("set exactly one of p, p_range")
        if self.p is not None and not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p={self.p} outside [0, 1]")
        if self.p_range is not None:
            lo, hi = self.p_range
            if not 0.0 <= lo <= hi <= 1.0:
                raise ValueError(f"p_range={self.p_range} invalid")


@dataclass(frozen=True)
class Batch:
    """A sampled batch: +/-1 syndromes, raw error bits, class labels."""

    syndromes: np.ndarray  # (B, m) float64, entries +1 (check clear) or -1 (tripped)
    errors: np.ndarray  # (B, n_err) uint8
    classes: np.ndarray  # (B,) int64


def error_stream(seed: int, index: int, domain: int = DOMAIN_TRAIN) -> np.random.Generator:
    """Independent random stream for one sample."""
    word0 = ((int(seed) << 8) | (domain & 0xFF)) & _MASK64
    return np.random.Generator(np.random.Philox(key=[word0, int(index) & _MASK64]))


def _draw_p(spec: NoiseSpec, rng: np.random.Generator) -> float:
    if spec.p is not None:
        return spec.p
    lo, hi = spec.p_range
    return float(rng.uniform(lo, hi))


def sample_error(problem: DecodingProblem, spec: NoiseSpec, rng: np.random.Generator) -> np.ndarray:
    """Draw one error string for the problem from its channel."""
    if spec.model == "independent":
        if problem.kind != "sector":
            raise ValueError("independent noise applies to sector problems")
        p = _draw_p(spec, rng)
        return (rng.random(problem.n_err) < p).astype(np.uint8)
    if problem.kind != "symplectic":
        raise ValueError("depolarizing noise applies to symplectic problems")
    p = _draw_p(spec, rng)
    n_q = problem.n_err // 2
    hit = rng.random(n_q) < p
    which = rng.random(n_q)  # thirds select X, Z, Y
    e = np.zeros(problem.n_err, dtype=np.uint8)
    e[:n_q] = hit & ((which < 1 / 3) | (which >= 2 / 3))  # X or Y flips e_x
    e[n_q:] = hit & (which >= 1 / 3)  # Z or Y flips e_z
    return e


def make_batch(
    problem: DecodingProblem,
    spec: NoiseSpec,
    batch_size: int,
    seed: int,
    start_index: int = 0,
    domain: int = DOMAIN_TRAIN,
) -> Batch:
    """Sample a batch; sample j uses the stream keyed by (seed, start_index + j).

    Syndromes are returned in the +/-1 convention 1 - 2 * syndrome_bits.
    """
    errors = np.empty((batch_size, problem.n_err), dtype=np.uint8)
    for j in range(batch_size):
        rng = error_stream(seed, start_index + j, domain)
        errors[j] = sample_error(problem, spec, rng)
    syn_bits = (errors.astype(np.int64) @ problem.h_eff.T.astype(np.int64)) & 1
    cls_bits = (errors.astype(np.int64) @ problem.l_eff.T.astype(np.int64)) & 1
    classes = cls_bits @ (1 << np.arange(problem.n_log, dtype=np.int64))
    return Batch(
        syndromes=(1.0 - 2.0 * syn_bits).astype(np.float64),
        errors=errors,
        classes=classes.astype(np.int64),
    )


def batch_is_consistent(problem: DecodingProblem, batch: Batch) -> bool:
    """Cross-check helper: recompute syndromes and labels row by row."""
    for e, s_row, c in zip(batch.errors, batch.syndromes, batch.classes):
        if not np.array_equal(1.0 - 2.0 * syndrome(problem, e), s_row):
            return False
        if logical_class(problem, e) != int(c):
            return False
    return True
