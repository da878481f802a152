"""Integer lattice bases, exact lattice vectors, and the bracketed text format.

A basis is stored as a square integer matrix whose rows are the basis
vectors, the convention of common lattice tools; ``columns`` gives the
transposed view. Files look like::

    [[1 0 0]
    [0 1 0]
    [0 0 1]
    ]
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAX_ENTRY = 2**62


class BasisParseError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class RankDeficientError(ValueError):
    pass


def bareiss_det(rows) -> int:
    """Exact determinant of a square integer matrix (fraction-free elimination)."""
    a = [[int(v) for v in r] for r in rows]
    n = len(a)
    if any(len(r) != n for r in a):
        raise ValueError("matrix must be square")
    if n == 0:
        return 1
    sign, prev = 1, 1
    for k in range(n - 1):
        if a[k][k] == 0:
            swap = next((i for i in range(k + 1, n) if a[i][k] != 0), None)
            if swap is None:
                return 0
            a[k], a[swap] = a[swap], a[k]
            sign = -sign
        akk = a[k][k]
        for i in range(k + 1, n):
            aik = a[i][k]
            row_i, row_k = a[i], a[k]
            for j in range(k + 1, n):
                row_i[j] = (row_i[j] * akk - aik * row_k[j]) // prev
        prev = akk
    return sign * a[n - 1][n - 1]


@dataclass(frozen=True, eq=False)
class LatticeBasis:
    rows: np.ndarray  # (d, d) int64, one basis vector per row
    transform: np.ndarray | None = None  # unimodular U with rows = U @ original rows
    _gram: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        rows = np.asarray(self.rows)
        if rows.ndim != 2 or rows.shape[0] != rows.shape[1] or rows.shape[0] == 0:
            raise ValueError("basis must be a non-empty square matrix")
        if rows.dtype == object or np.abs(rows).max() >= MAX_ENTRY:
            if any(abs(int(v)) >= MAX_ENTRY for v in rows.ravel()):
                raise OverflowError("basis entries exceed the int64 working range")
        object.__setattr__(self, "rows", rows.astype(np.int64))

    @classmethod
    def from_rows(cls, rows, check_rank: bool = True) -> "LatticeBasis":
        b = cls(np.asarray(rows, dtype=object))
        if check_rank and b.determinant() == 0:
            raise RankDeficientError("basis vectors are linearly dependent")
        return b

    @property
    def d(self) -> int:
        return self.rows.shape[0]

    @property
    def columns(self) -> np.ndarray:
        return self.rows.T

    @property
    def gram(self) -> np.ndarray:
        if not self._gram:
            f = self.rows.astype(float)
            self._gram.append(f @ f.T)
        return self._gram[0]

    def determinant(self) -> int:
        return bareiss_det(self.rows.tolist())

    def vector(self, coeffs) -> "LatticeVector":
        return LatticeVector.from_coeffs(self, coeffs)

    def __eq__(self, other):
        return isinstance(other, LatticeBasis) and np.array_equal(self.rows, other.rows)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class LatticeVector:
    coeffs: np.ndarray  # integer coordinates w.r.t. the basis rows
    embedding: np.ndarray
    norm: float

    @classmethod
    def from_coeffs(cls, basis: LatticeBasis, coeffs) -> "LatticeVector":
        c = np.asarray(coeffs, dtype=np.int64)
        if c.shape != (basis.d,):
            raise ValueError("coefficient vector has the wrong length")
        emb = c @ basis.rows
        return cls(c, emb.astype(float), math.sqrt(exact_sq_norm(emb)))

    def is_zero(self) -> bool:
        return not self.coeffs.any()


def exact_sq_norm(v) -> int:
    return sum(int(x) * int(x) for x in np.asarray(v).tolist())


def is_lattice_vector(basis: LatticeBasis, vec: LatticeVector) -> bool:
    """Recompute the embedding from integer coefficients and compare exactly."""
    exact = [sum(int(c) * int(b) for c, b in zip(vec.coeffs.tolist(), col)) for col in basis.rows.T.tolist()]
    if any(abs(e - v) > 1e-9 * max(1.0, abs(e)) for e, v in zip(exact, vec.embedding.tolist())):
        return False
    return abs(math.sqrt(sum(e * e for e in exact)) - vec.norm) <= 1e-9 * max(1.0, vec.norm)


# ------------------------------------------------------------------ text format

_TOKEN = re.compile(r"\s*(\[|\]|[+-]?\d+)")


def _position(text: str, offset: int) -> tuple[int, int]:
    line = text.count("\n", 0, offset) + 1
    col = offset - (text.rfind("\n", 0, offset) + 1) + 1
    return line, col


def parse_basis(text: str, check_rank: bool = True) -> LatticeBasis:
    """Strict parser for ``[[a b ...]\\n[c d ...]\\n]``; errors carry line and column."""
    pos = 0
    n = len(text)

    def fail(msg, at):
        raise BasisParseError(msg, *_position(text, at))

    def next_token():
        nonlocal pos
        m = _TOKEN.match(text, pos)
        if m is None:
            at = pos
            while at < n and text[at].isspace():
                at += 1
            if at >= n:
                fail("unexpected end of input", at)
            fail(f"unexpected character {text[at]!r}", at)
        pos = m.end()
        return m.group(1), m.start(1)

    tok, at = next_token()
    if tok != "[":
        fail("expected '['", at)
    rows = []
    while True:
        tok, at = next_token()
        if tok == "]":
            break
        if tok != "[":
            fail("expected '[' to open a row", at)
        row = []
        while True:
            tok, at = next_token()
            if tok == "]":
                break
            if tok == "[":
                fail("nested '[' inside a row", at)
            row.append(int(tok))
        if not row:
            fail("empty row", at)
        if rows and len(row) != len(rows[0]):
            fail(f"row has {len(row)} entries, expected {len(rows[0])}", at)
        rows.append(row)
    rest = text[pos:]
    if rest.strip():
        fail("trailing content after basis", pos + (len(rest) - len(rest.lstrip())))
    if not rows:
        fail("empty basis", at)
    if len(rows) != len(rows[0]):
        fail(f"basis has {len(rows)} rows of length {len(rows[0])}; expected a square matrix", at)
    return LatticeBasis.from_rows(rows, check_rank=check_rank)


def format_basis(basis: LatticeBasis) -> str:
    lines = ["[" + " ".join(str(int(v)) for v in row) + "]" for row in basis.rows]
    return "[" + "\n".join(lines) + "\n]\n"


def load_basis(path, check_rank: bool = True) -> LatticeBasis:
    return parse_basis(Path(path).read_text(), check_rank=check_rank)


def save_basis(basis: LatticeBasis, path) -> None:
    Path(path).write_text(format_basis(basis))


def random_basis(d: int, bits: int, rng) -> LatticeBasis:
    """Full-rank basis with uniform entries in [-2^(bits-1), 2^(bits-1))."""
    half = 1 << (bits - 1)
    while True:
        rows = rng.integers(-half, half, size=(d, d))
        if bareiss_det(rows.tolist()) != 0:
            return LatticeBasis(rows)


def bundled_basis_path(name: str = "basis_d16.txt") -> Path:
    return Path(__file__).resolve().parent.parent / "data" / name
