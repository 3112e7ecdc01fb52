"""CSS stabilizer codes and the binary decoding problems they induce.

Geometry note
-------------
Toric code, linear size L: qubits sit on the edges of an L x L square
lattice with periodic boundaries.  Horizontal edge (r, c) joins vertex
(r, c) to (r, c+1 mod L) and gets index r*L + c; vertical edge (r, c)
joins (r, c) to (r+1 mod L, c) and gets index L*L + r*L + c.  The X-type
generator at vertex (r, c) acts on the four incident edges, the Z-type
generator at face (r, c) on the four surrounding edges.  Each family
multiplies to identity, so the last vertex generator and the last face
generator (row-major order) are dropped, leaving L*L - 1 independent
rows per type.  Logical operators: X1 on horizontal edges of column 0,
X2 on vertical edges of row 0, Z1 on horizontal edges of row 0, Z2 on
vertical edges of column 0.

Rotated surface code, odd distance L: qubits at integer grid points
(r, c) in [0, L)^2, index r*L + c.  Faces are unit squares with corner
(r, c); interior faces carry weight-4 checks, X-type when r + c is even,
Z-type when odd.  Weight-2 boundary checks extend the checkerboard:
X-type above row 0 (c odd) and below row L-1 (c even), Z-type left of
column 0 (r even) and right of column L-1 (r odd).  That yields
(L^2 - 1) / 2 generators per type, every bulk qubit touching exactly two
of each.  Logical X is column 0, logical Z is row 0.

Repetition code, length L: Z-type checks Z_i Z_{i+1} on neighbouring
qubits detect X errors only.  Logical X is all ones, logical Z is qubit 0.

Decoding problems
-----------------
A DecodingProblem packages the effective parity-check matrix H and the
logical-action matrix A for one error space.  Under independent X/Z
noise each sector is decoded on physical-error bit strings e of length
n; under depolarizing noise the error is the concatenation (e_x | e_z)
and H block-stacks the two sector checks.  The logical class of e is
the integer whose j-th bit (low bit first) is row j of A applied to e.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import gf2

__all__ = [
    "StabilizerCode",
    "DecodingProblem",
    "build_toric",
    "build_rotated_surface",
    "build_repetition",
    "build_code",
    "sector_problem",
    "depolarizing_problem",
    "syndrome",
    "logical_class",
    "class_bits",
    "index_to_bits",
    "attention_mask",
    "code_to_text",
    "code_from_text",
]


@dataclass(frozen=True)
class StabilizerCode:
    """A CSS code: X/Z check matrices plus paired logical operators."""

    name: str
    distance: int
    n: int
    k: int
    hx: np.ndarray  # X-type generators, one row per check, n columns
    hz: np.ndarray  # Z-type generators
    lx: np.ndarray  # logical X representatives, k rows
    lz: np.ndarray  # logical Z representatives, k rows

    def __post_init__(self):
        for attr in ("hx", "hz", "lx", "lz"):
            mat = gf2.as_bit_matrix(getattr(self, attr))
            object.__setattr__(self, attr, mat)
            if mat.shape[1] != self.n:
                raise ValueError(f"{attr} has {mat.shape[1]} columns, expected {self.n}")
        if self.lx.shape[0] != self.k or self.lz.shape[0] != self.k:
            raise ValueError("logical operator count must equal k")
        validate_code(self)

    @property
    def m(self) -> int:
        """Total number of stabilizer generators."""
        return self.hx.shape[0] + self.hz.shape[0]


def validate_code(code: StabilizerCode) -> None:
    """Raise ValueError on any violated stabilizer-code identity."""
    if code.hx.shape[0] and code.hz.shape[0]:
        if np.any(gf2.matmul(code.hx, code.hz.T)):
            raise ValueError("X and Z generators do not commute: Hx @ Hz.T != 0")
    if code.hz.shape[0] and np.any(gf2.matmul(code.hz, code.lx.T)):
        raise ValueError("logical X anticommutes with a Z generator")
    if code.hx.shape[0] and np.any(gf2.matmul(code.hx, code.lz.T)):
        raise ValueError("logical Z anticommutes with an X generator")
    pairing = gf2.matmul(code.lx, code.lz.T)
    if not np.array_equal(pairing, np.eye(code.k, dtype=np.uint8)):
        raise ValueError("logical pairing Lx @ Lz.T is not the identity")
    if gf2.rank(code.hx) != code.hx.shape[0]:
        raise ValueError("X generators are linearly dependent")
    if gf2.rank(code.hz) != code.hz.shape[0]:
        raise ValueError("Z generators are linearly dependent")
    if code.m != code.n - code.k:
        raise ValueError(f"generator count {code.m} != n - k = {code.n - code.k}")


def build_toric(L: int) -> StabilizerCode:
    """Toric code on an L x L periodic lattice (n = 2L^2, k = 2)."""
    if L < 2:
        raise ValueError("toric code needs L >= 2")
    n = 2 * L * L

    def h_edge(r, c):
        return (r % L) * L + (c % L)

    def v_edge(r, c):
        return L * L + (r % L) * L + (c % L)

    hx_rows = []
    for r in range(L):
        for c in range(L):
            row = np.zeros(n, dtype=np.uint8)
            row[[h_edge(r, c), h_edge(r, c - 1), v_edge(r, c), v_edge(r - 1, c)]] = 1
            hx_rows.append(row)
    hz_rows = []
    for r in range(L):
        for c in range(L):
            row = np.zeros(n, dtype=np.uint8)
            row[[h_edge(r, c), h_edge(r + 1, c), v_edge(r, c), v_edge(r, c + 1)]] = 1
            hz_rows.append(row)
    # each family multiplies to identity: drop the last generator of each
    hx = np.array(hx_rows[:-1], dtype=np.uint8)
    hz = np.array(hz_rows[:-1], dtype=np.uint8)

    lx = np.zeros((2, n), dtype=np.uint8)
    lz = np.zeros((2, n), dtype=np.uint8)
    lx[0, [h_edge(r, 0) for r in range(L)]] = 1
    lx[1, [v_edge(0, c) for c in range(L)]] = 1
    lz[0, [h_edge(0, c) for c in range(L)]] = 1
    lz[1, [v_edge(r, 0) for r in range(L)]] = 1
    return StabilizerCode(name="toric", distance=L, n=n, k=2, hx=hx, hz=hz, lx=lx, lz=lz)


def build_rotated_surface(L: int) -> StabilizerCode:
    """Rotated surface code of odd distance L (n = L^2, k = 1)."""
    if L < 3 or L % 2 == 0:
        raise ValueError("rotated surface code needs odd L >= 3")
    n = L * L

    def qubit(r, c):
        return r * L + c

    def face_qubits(r, c):
        """In-grid corners of the unit square with top-left corner (r, c)."""
        corners = [(r, c), (r, c + 1), (r + 1, c), (r + 1, c + 1)]
        return [qubit(rr, cc) for rr, cc in corners if 0 <= rr < L and 0 <= cc < L]

    hx_rows, hz_rows = [], []
    for r in range(-1, L):
        for c in range(-1, L):
            support = face_qubits(r, c)
            if len(support) < 2:
                continue
            x_type = (r + c) % 2 == 0
            if len(support) == 2:
                # boundary checks alternate along each side; keep X-type
                # half-faces on the top/bottom rows, Z-type on the sides
                top_or_bottom = r == -1 or r == L - 1
                if x_type != top_or_bottom:
                    continue
            row = np.zeros(n, dtype=np.uint8)
            row[support] = 1
            (hx_rows if x_type else hz_rows).append(row)

    lx = np.zeros((1, n), dtype=np.uint8)
    lz = np.zeros((1, n), dtype=np.uint8)
    lx[0, [qubit(r, 0) for r in range(L)]] = 1
    lz[0, [qubit(0, c) for c in range(L)]] = 1
    return StabilizerCode(
        name="rotated_surface",
        distance=L,
        n=n,
        k=1,
        hx=np.array(hx_rows, dtype=np.uint8),
        hz=np.array(hz_rows, dtype=np.uint8),
        lx=lx,
        lz=lz,
    )


def build_repetition(L: int) -> StabilizerCode:
    """Length-L repetition code protecting against X errors only."""
    if L < 2:
        raise ValueError("repetition code needs L >= 2")
    hz = np.zeros((L - 1, L), dtype=np.uint8)
    for i in range(L - 1):
        hz[i, i] = hz[i, i + 1] = 1
    hx = np.zeros((0, L), dtype=np.uint8)
    lx = np.ones((1, L), dtype=np.uint8)
    lz = np.zeros((1, L), dtype=np.uint8)
    lz[0, 0] = 1
    return StabilizerCode(name="repetition", distance=L, n=L, k=1, hx=hx, hz=hz, lx=lx, lz=lz)


_BUILDERS = {
    "toric": build_toric,
    "rotated_surface": build_rotated_surface,
    "repetition": build_repetition,
}


def build_code(name: str, L: int) -> StabilizerCode:
    """Build a code by family name: toric, rotated_surface or repetition."""
    if name not in _BUILDERS:
        raise ValueError(f"unknown code family {name!r}; choose from {sorted(_BUILDERS)}")
    return _BUILDERS[name](L)


@dataclass(frozen=True)
class DecodingProblem:
    """Binary decoding problem: checks h_eff and logical actions l_eff.

    kind is "sector" (error bits are one Pauli species per qubit) or
    "symplectic" (error bits are the concatenation e_x | e_z).
    stabilizer_rows, when present, are generator rows acting trivially
    on this error space; they span the nullspace of [h_eff; l_eff].
    """

    h_eff: np.ndarray
    l_eff: np.ndarray
    n_err: int
    m: int
    n_log: int
    n_classes: int
    kind: str
    stabilizer_rows: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        h = gf2.as_bit_matrix(self.h_eff)
        l = gf2.as_bit_matrix(self.l_eff)
        object.__setattr__(self, "h_eff", h)
        object.__setattr__(self, "l_eff", l)
        if h.shape != (self.m, self.n_err) or l.shape != (self.n_log, self.n_err):
            raise ValueError("h_eff / l_eff shapes disagree with declared sizes")
        if self.n_classes != 2**self.n_log:
            raise ValueError("n_classes must be 2 ** n_log")
        if gf2.rank(h) != self.m:
            raise ValueError("h_eff rows are linearly dependent")
        stacked = np.concatenate([h, l], axis=0)
        if gf2.rank(stacked) != self.m + self.n_log:
            raise ValueError("logical rows are not independent of the checks")


def sector_problem(code: StabilizerCode, sector: str) -> DecodingProblem:
    """Decoding problem for one Pauli species under independent noise.

    The "x" sector decodes X errors: they trip Z-type checks and their
    class is read off by the logical Z operators.  The "z" sector is the
    mirror image.
    """
    if sector == "x":
        h_eff, l_eff, stab = code.hz, code.lz, code.hx
    elif sector == "z":
        h_eff, l_eff, stab = code.hx, code.lx, code.hz
    else:
        raise ValueError(f"sector must be 'x' or 'z', got {sector!r}")
    if h_eff.shape[0] == 0:
        raise ValueError(f"{code.name}: {sector} errors are undetectable (no checks)")
    return DecodingProblem(
        h_eff=h_eff,
        l_eff=l_eff,
        n_err=code.n,
        m=h_eff.shape[0],
        n_log=code.k,
        n_classes=2**code.k,
        kind="sector",
        stabilizer_rows=stab,
    )


def depolarizing_problem(code: StabilizerCode) -> DecodingProblem:
    """Joint decoding problem on symplectic errors (e_x | e_z).

    Z-type checks see the e_x half, X-type checks the e_z half; the
    class bits are (Lz @ e_x, then Lx @ e_z), low bit first.
    """
    if code.hx.shape[0] == 0 or code.hz.shape[0] == 0:
        raise ValueError(f"{code.name}: needs both check types for depolarizing noise")
    n = code.n
    mz, mx = code.hz.shape[0], code.hx.shape[0]
    h_eff = np.zeros((mz + mx, 2 * n), dtype=np.uint8)
    h_eff[:mz, :n] = code.hz
    h_eff[mz:, n:] = code.hx
    l_eff = np.zeros((2 * code.k, 2 * n), dtype=np.uint8)
    l_eff[: code.k, :n] = code.lz
    l_eff[code.k :, n:] = code.lx
    stab = np.zeros((mx + mz, 2 * n), dtype=np.uint8)
    stab[:mx, :n] = code.hx
    stab[mx:, n:] = code.hz
    return DecodingProblem(
        h_eff=h_eff,
        l_eff=l_eff,
        n_err=2 * n,
        m=mz + mx,
        n_log=2 * code.k,
        n_classes=4**code.k,
        kind="symplectic",
        stabilizer_rows=stab,
    )


def syndrome(problem: DecodingProblem, e) -> np.ndarray:
    """Syndrome bits h_eff @ e of an error string."""
    return gf2.matvec(problem.h_eff, e)


def class_bits(problem: DecodingProblem, e) -> np.ndarray:
    """Logical-action bits l_eff @ e of an error string."""
    return gf2.matvec(problem.l_eff, e)


def logical_class(problem: DecodingProblem, e) -> int:
    """Logical class index of e: bit j (low bit first) is row j of l_eff @ e."""
    bits = class_bits(problem, e)
    return int(np.sum(bits.astype(np.int64) << np.arange(problem.n_log)))


def index_to_bits(index: int, n_log: int) -> np.ndarray:
    """Class index back to its bit string, low bit first."""
    if not 0 <= index < 2**n_log:
        raise ValueError(f"class index {index} out of range for n_log={n_log}")
    return ((index >> np.arange(n_log)) & 1).astype(np.uint8)


def attention_mask(problem: DecodingProblem) -> np.ndarray:
    """Boolean (m+1) x (m+1) mask of allowed check-token interactions.

    Token 0 is a global token allowed everywhere.  Tokens i, j >= 1 may
    interact iff checks i-1 and j-1 share at least one error bit, which
    includes the diagonal since every check has nonempty support.
    """
    gram = gf2.integer_gram(problem.h_eff)
    allow = np.ones((problem.m + 1, problem.m + 1), dtype=bool)
    allow[1:, 1:] = gram > 0
    return allow


def code_to_text(code: StabilizerCode) -> str:
    """Serialize a code: a header line then the four matrices in text form."""
    header = f"name={code.name} L={code.distance} n={code.n} k={code.k} m={code.m}"
    blocks = [header]
    for attr in ("hx", "hz", "lx", "lz"):
        mat = getattr(code, attr)
        blocks.append(f"[{attr} rows={mat.shape[0]}]")
        text = gf2.to_text(mat)
        if text:
            blocks.append(text)
    return "\n".join(blocks) + "\n"


def code_from_text(text: str) -> StabilizerCode:
    """Parse :func:`code_to_text` output and revalidate the code."""
    lines = text.splitlines()
    if not lines:
        raise ValueError("empty code text")
    header = dict(part.split("=", 1) for part in lines[0].split())
    name = header["name"]
    L, n, k, m = (int(header[key]) for key in ("L", "n", "k", "m"))
    mats: dict[str, np.ndarray] = {}
    i = 1
    for attr in ("hx", "hz", "lx", "lz"):
        tag = lines[i].strip()
        if not tag.startswith(f"[{attr} rows="):
            raise ValueError(f"expected block tag for {attr}, got {tag!r}")
        rows = int(tag[len(f"[{attr} rows=") : -1])
        block = lines[i + 1 : i + 1 + rows]
        mats[attr] = gf2.from_text("\n".join(block), n_cols=n)
        i += 1 + rows
    code = StabilizerCode(name=name, distance=L, n=n, k=k, **mats)
    if code.m != m:
        raise ValueError(f"header m={m} disagrees with parsed generator count {code.m}")
    return code
