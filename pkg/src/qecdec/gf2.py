"""Dense linear algebra over GF(2).

Vectors and matrices are numpy ``uint8`` arrays with entries in {0, 1}.
Addition is XOR, multiplication is AND, and elimination uses the
deterministic leftmost-pivot rule: for each candidate column, the first
row (top to bottom) holding a 1 becomes the pivot row.  Every routine
here is a pure function; inputs are validated and never mutated.

Empty matrices (zero rows or zero columns) are legal everywhere and
behave like the corresponding trivial linear maps.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "as_bit_matrix",
    "as_bit_vector",
    "matvec",
    "matmul",
    "rank",
    "rref",
    "solve",
    "left_inverse",
    "nullspace_basis",
    "integer_gram",
    "to_text",
    "from_text",
]


def _as_bits(a, ndim: int, what: str) -> np.ndarray:
    raw = np.asarray(a)
    if raw.ndim != ndim:
        raise ValueError(f"expected a {ndim}-D {what}, got ndim={raw.ndim}")
    if raw.size and not np.isin(raw, (0, 1)).all():
        raise ValueError(f"{what} entries must be 0 or 1")
    return raw.astype(np.uint8)


def as_bit_matrix(a) -> np.ndarray:
    """Validate and return ``a`` as a 2-D uint8 array with entries in {0, 1}."""
    return _as_bits(a, 2, "bit matrix")


def as_bit_vector(a) -> np.ndarray:
    """Validate and return ``a`` as a 1-D uint8 array with entries in {0, 1}."""
    return _as_bits(a, 1, "bit vector")


def matvec(a, x) -> np.ndarray:
    """Matrix-vector product over GF(2).

    Args:
        a: (m, n) bit matrix.
        x: length-n bit vector.

    Returns:
        Length-m bit vector (a @ x mod 2).
    """
    a = as_bit_matrix(a)
    x = as_bit_vector(x)
    if a.shape[1] != x.shape[0]:
        raise ValueError(f"shape mismatch: {a.shape} @ ({x.shape[0]},)")
    return ((a.astype(np.int64) @ x.astype(np.int64)) & 1).astype(np.uint8)


def matmul(a, b) -> np.ndarray:
    """Matrix-matrix product over GF(2)."""
    a = as_bit_matrix(a)
    b = as_bit_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"shape mismatch: {a.shape} @ {b.shape}")
    return ((a.astype(np.int64) @ b.astype(np.int64)) & 1).astype(np.uint8)


def integer_gram(a) -> np.ndarray:
    """Integer Gram matrix A @ A.T counting column overlaps (not reduced mod 2)."""
    a = as_bit_matrix(a).astype(np.int64)
    return a @ a.T


def rref(a) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form over GF(2).

    Scans columns left to right; the first unused row containing a 1 in
    the current column is swapped up and XORed into every other row with
    a 1 there.

    Returns:
        (r, pivot_cols) where r is the reduced matrix and pivot_cols
        lists the pivot column of each pivot row, in row order.
    """
    r = as_bit_matrix(a).copy()
    n_rows, n_cols = r.shape
    pivot_cols: list[int] = []
    row = 0
    for col in range(n_cols):
        if row >= n_rows:
            break
        hits = np.nonzero(r[row:, col])[0]
        if hits.size == 0:
            continue
        pivot = row + int(hits[0])
        if pivot != row:
            r[[row, pivot]] = r[[pivot, row]]
        mask = r[:, col].copy()
        mask[row] = 0
        r[mask == 1] ^= r[row]
        pivot_cols.append(col)
        row += 1
    return r, pivot_cols


def rank(a) -> int:
    """Rank of a bit matrix over GF(2)."""
    _, pivot_cols = rref(a)
    return len(pivot_cols)


def solve(a, b) -> np.ndarray | None:
    """Solve a @ x = b over GF(2); free variables are set to 0.

    Returns:
        A solution vector, or None if the system is inconsistent.
    """
    a = as_bit_matrix(a)
    b = as_bit_vector(b)
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"shape mismatch: {a.shape} vs ({b.shape[0]},)")
    aug = np.concatenate([a, b[:, None]], axis=1)
    r, pivot_cols = rref(aug)
    n = a.shape[1]
    # a pivot in the augmented column means 0 = 1 in some row
    if n in pivot_cols:
        return None
    x = np.zeros(n, dtype=np.uint8)
    for row_idx, col in enumerate(pivot_cols):
        x[col] = r[row_idx, n]
    return x


def left_inverse(a) -> np.ndarray:
    """Pseudo-inverse B of a full-row-rank map, satisfying a @ B = I.

    Applied on the left of a target vector, B picks one preimage per
    target: column B[:, i] solves a @ x = e_i with free variables set
    to 0, so B is supported on the leftmost pivot columns of a.

    Raises:
        ValueError: if rank(a) < number of rows (naming the deficiency).
    """
    a = as_bit_matrix(a)
    m, n = a.shape
    aug = np.concatenate([a, np.eye(m, dtype=np.uint8)], axis=1)
    r, pivot_cols = rref(aug)
    lead = [c for c in pivot_cols if c < n]
    if len(lead) < m:
        raise ValueError(f"no left inverse: rank {len(lead)} < {m} rows")
    b = np.zeros((n, m), dtype=np.uint8)
    for row_idx, col in enumerate(lead):
        b[col] = r[row_idx, n:]
    return b


def nullspace_basis(a) -> np.ndarray:
    """Basis of the right nullspace of a, one vector per row.

    Built from the RREF in free-variable canonical form: for each free
    column f (ascending) the basis vector has a 1 at f and copies the
    RREF entries of column f at the pivot positions.  An injective map
    yields a (0, n) matrix.
    """
    a = as_bit_matrix(a)
    n = a.shape[1]
    r, pivot_cols = rref(a)
    free_cols = [c for c in range(n) if c not in set(pivot_cols)]
    basis = np.zeros((len(free_cols), n), dtype=np.uint8)
    for k, f in enumerate(free_cols):
        basis[k, f] = 1
        for row_idx, col in enumerate(pivot_cols):
            basis[k, col] = r[row_idx, f]
    return basis


def to_text(a) -> str:
    """Serialize a bit matrix as one '0'/'1' string per row."""
    a = as_bit_matrix(a)
    return "\n".join("".join(str(int(v)) for v in row) for row in a)


def from_text(text: str, n_cols: int | None = None) -> np.ndarray:
    """Parse the output of :func:`to_text` back into a bit matrix.

    Args:
        text: newline-separated rows of '0'/'1' characters.
        n_cols: required width for an empty (zero-row) matrix; ignored
            otherwise.
    """
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        return np.zeros((0, n_cols or 0), dtype=np.uint8)
    widths = {len(ln) for ln in lines}
    if len(widths) != 1:
        raise ValueError("ragged rows in bit-matrix text")
    bad = set("".join(lines)) - {"0", "1"}
    if bad:
        raise ValueError(f"invalid characters in bit-matrix text: {sorted(bad)}")
    return np.array([[int(ch) for ch in ln] for ln in lines], dtype=np.uint8)
