"""Exact arithmetic and linear algebra over prime fields GF(q).

Conventions used throughout the package:

* Vectors over GF(2) are packed into Python integers, bit ``i`` holding
  coordinate ``i``.  XOR is then both vector addition and the workhorse of
  Gaussian elimination, and arbitrary dimensions come for free.
* Vectors over odd primes are tuples of residues in ``[0, q)``.
* Matrices are immutable after construction and safe to share across
  threads.  The only stateful object is the random generator, which is
  always passed explicitly.

Randomness is counter-based and splittable: ``substream(seed, *labels)``
returns an independent generator that is a pure function of its arguments,
so parallel trials can derive non-overlapping streams deterministically.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

MAX_MODULUS = 2**31


def is_prime(n: int) -> bool:
    """Trial-division primality test; sufficient for the moduli in scope."""
    if n < 2:
        return False
    if n < 4:
        return True
    if n % 2 == 0:
        return False
    i = 3
    while i * i <= n:
        if n % i == 0:
            return False
        i += 2
    return True


def check_modulus(q: int) -> int:
    if not isinstance(q, int) or not 2 <= q < MAX_MODULUS:
        raise ValueError(f"modulus must be an integer in [2, 2^31), got {q!r}")
    if not is_prime(q):
        raise ValueError(f"modulus {q} is not prime")
    return q


def substream(seed: int, *labels: object) -> np.random.Generator:
    """Independent random stream keyed by ``hash(seed, labels)``.

    Built on the counter-based Philox generator so that sub-streams for
    distinct label paths never collide and results are reproducible across
    platforms and thread schedules.  The generator is seeded through a seed
    sequence, so further deterministic children can be derived by spawning.
    """
    payload = repr((int(seed), labels)).encode()
    digest = hashlib.blake2b(payload, digest_size=16).digest()
    entropy = int.from_bytes(digest, "big")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


@dataclass(frozen=True)
class FieldElement:
    """A residue in GF(q); ``modulus`` must be prime."""

    value: int
    modulus: int

    def __post_init__(self):
        check_modulus(self.modulus)
        object.__setattr__(self, "value", int(self.value) % self.modulus)

    def _coerce(self, other: "FieldElement") -> int:
        if not isinstance(other, FieldElement):
            raise TypeError(f"expected FieldElement, got {type(other).__name__}")
        if other.modulus != self.modulus:
            raise ValueError(f"modulus mismatch: {self.modulus} vs {other.modulus}")
        return other.value

    def __add__(self, other):
        return FieldElement((self.value + self._coerce(other)) % self.modulus, self.modulus)

    def __sub__(self, other):
        return FieldElement((self.value - self._coerce(other)) % self.modulus, self.modulus)

    def __mul__(self, other):
        return FieldElement((self.value * self._coerce(other)) % self.modulus, self.modulus)

    def __neg__(self):
        return FieldElement(-self.value % self.modulus, self.modulus)

    def inverse(self) -> "FieldElement":
        if self.value == 0:
            raise ZeroDivisionError("inversion of zero")
        return FieldElement(pow(self.value, self.modulus - 2, self.modulus), self.modulus)

    def __repr__(self):
        return f"FieldElement({self.value} mod {self.modulus})"


def field_arithmetic(a: FieldElement, b: FieldElement | None, op: str) -> FieldElement:
    """Dispatch one of {add, sub, mul, inv} on field elements."""
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "inv":
        return a.inverse()
    raise ValueError(f"unknown field operation {op!r}")


def pack_bits(vector: Iterable[int]) -> int:
    """Pack a 0/1 coordinate sequence into an integer, bit i = coordinate i."""
    packed = 0
    for i, b in enumerate(vector):
        if b & 1:
            packed |= 1 << i
    return packed


def unpack_bits(packed: int, dim: int) -> tuple[int, ...]:
    return tuple((packed >> i) & 1 for i in range(dim))


@dataclass(frozen=True)
class FieldMatrix:
    """Dense immutable matrix over GF(q), entries stored row-major."""

    rows: int
    cols: int
    modulus: int
    entries: tuple[tuple[int, ...], ...]

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]], q: int) -> "FieldMatrix":
        check_modulus(q)
        data = tuple(tuple(int(v) % q for v in row) for row in rows)
        n_rows = len(data)
        n_cols = len(data[0]) if data else 0
        if any(len(r) != n_cols for r in data):
            raise ValueError("ragged rows")
        return cls(n_rows, n_cols, q, data)

    @classmethod
    def from_columns(cls, columns: Sequence[Sequence[int]], q: int) -> "FieldMatrix":
        if not columns:
            return cls.from_rows([], q)
        rows = list(zip(*columns))
        return cls.from_rows(rows, q)

    @classmethod
    def identity(cls, n: int, q: int) -> "FieldMatrix":
        return cls.from_rows([[1 if i == j else 0 for j in range(n)] for i in range(n)], q)

    @classmethod
    def zeros(cls, rows: int, cols: int, q: int) -> "FieldMatrix":
        return cls.from_rows([[0] * cols for _ in range(rows)], q)

    def element(self, i: int, j: int) -> FieldElement:
        return FieldElement(self.entries[i][j], self.modulus)

    def column(self, j: int) -> tuple[int, ...]:
        return tuple(self.entries[i][j] for i in range(self.rows))

    def column_vector(self, j: int):
        """Column in canonical vector form: packed int for GF(2), tuple otherwise."""
        col = self.column(j)
        return pack_bits(col) if self.modulus == 2 else col

    def column_vectors(self) -> list:
        return [self.column_vector(j) for j in range(self.cols)]

    def packed_rows(self) -> list[int]:
        if self.modulus != 2:
            raise ValueError("packed representation is GF(2) only")
        return [pack_bits(row) for row in self.entries]

    def to_lists(self) -> list[list[int]]:
        return [list(row) for row in self.entries]

    def multiply(self, other: "FieldMatrix") -> "FieldMatrix":
        if self.modulus != other.modulus:
            raise ValueError(f"modulus mismatch: {self.modulus} vs {other.modulus}")
        if self.cols != other.rows:
            raise ValueError(f"dimension mismatch: {self.rows}x{self.cols} @ {other.rows}x{other.cols}")
        q = self.modulus
        out = []
        bcols = list(zip(*other.entries)) if other.entries else []
        for arow in self.entries:
            out.append(tuple(sum(a * b for a, b in zip(arow, bcol)) % q for bcol in bcols))
        return FieldMatrix(self.rows, other.cols, q, tuple(out))

    def __matmul__(self, other):
        return self.multiply(other)

    def rank(self) -> int:
        """GF(q) rank via Gaussian elimination on a working copy."""
        if self.rows == 0 or self.cols == 0:
            return 0
        if self.modulus == 2:
            return rank_gf2(self.packed_rows())
        return _rank_modq([list(r) for r in self.entries], self.modulus)

    def __repr__(self):
        return f"FieldMatrix({self.rows}x{self.cols} mod {self.modulus})"


def rank_gf2(packed_rows: Iterable[int]) -> int:
    """Rank of a GF(2) matrix given as packed row integers."""
    basis = PackedBasis()
    for row in packed_rows:
        basis.add(row)
    return basis.rank


def _rank_modq(rows: list[list[int]], q: int) -> int:
    n_rows, n_cols = len(rows), len(rows[0])
    rank = 0
    col = 0
    while rank < n_rows and col < n_cols:
        pivot = next((i for i in range(rank, n_rows) if rows[i][col]), None)
        if pivot is None:
            col += 1
            continue
        rows[rank], rows[pivot] = rows[pivot], rows[rank]
        inv = pow(rows[rank][col], q - 2, q)
        rows[rank] = [(v * inv) % q for v in rows[rank]]
        for i in range(n_rows):
            if i != rank and rows[i][col]:
                f = rows[i][col]
                rows[i] = [(a - f * b) % q for a, b in zip(rows[i], rows[rank])]
        rank += 1
        col += 1
    return rank


class PackedBasis:
    """Incremental GF(2) elimination basis over packed integer vectors.

    Supports span queries and insert-if-independent in O(rank) word ops,
    which is what the duplicated-matroid rank oracle and the online
    selection schemes run on.
    """

    __slots__ = ("_pivots",)

    def __init__(self):
        self._pivots: dict[int, int] = {}

    def reduce(self, v: int) -> int:
        pivots = self._pivots
        while v:
            b = v.bit_length() - 1
            row = pivots.get(b)
            if row is None:
                return v
            v ^= row
        return 0

    def contains(self, v: int) -> bool:
        return self.reduce(v) == 0

    def add(self, v: int) -> bool:
        """Insert v if independent of the current span; True if rank grew."""
        v = self.reduce(v)
        if v == 0:
            return False
        self._pivots[v.bit_length() - 1] = v
        return True

    @property
    def rank(self) -> int:
        return len(self._pivots)

    def copy(self) -> "PackedBasis":
        fresh = PackedBasis()
        fresh._pivots = dict(self._pivots)
        return fresh


class ModBasis:
    """Incremental elimination basis over GF(q) tuple vectors (odd q)."""

    __slots__ = ("q", "dim", "_rows", "_pivot_cols")

    def __init__(self, q: int, dim: int):
        self.q = q
        self.dim = dim
        self._rows: list[list[int]] = []
        self._pivot_cols: list[int] = []

    def _reduce(self, v: Sequence[int]) -> list[int]:
        q = self.q
        v = [x % q for x in v]
        for row, col in zip(self._rows, self._pivot_cols):
            f = v[col]
            if f:
                v = [(a - f * b) % q for a, b in zip(v, row)]
        return v

    def contains(self, v: Sequence[int]) -> bool:
        return not any(self._reduce(v))

    def add(self, v: Sequence[int]) -> bool:
        v = self._reduce(v)
        col = next((i for i, x in enumerate(v) if x), None)
        if col is None:
            return False
        inv = pow(v[col], self.q - 2, self.q)
        self._rows.append([(x * inv) % self.q for x in v])
        self._pivot_cols.append(col)
        return True

    @property
    def rank(self) -> int:
        return len(self._rows)


def vector_basis(q: int, dim: int):
    """Fresh incremental basis in the canonical vector representation for q."""
    return PackedBasis() if q == 2 else ModBasis(q, dim)


def is_zero_vector(v) -> bool:
    return v == 0 if isinstance(v, int) else not any(v)


def random_matrix(rows: int, cols: int, q: int, rng: np.random.Generator) -> FieldMatrix:
    """Uniform matrix over GF(q); every entry an independent uniform draw.

    The byte stream consumed is a pure function of (generator state, rows,
    cols, q), so identical seeds yield identical matrices.
    """
    check_modulus(q)
    data = rng.integers(0, q, size=(rows, cols), dtype=np.int64)
    return FieldMatrix(rows, cols, q, tuple(tuple(int(v) for v in row) for row in data))


def random_invertible(n: int, q: int, rng: np.random.Generator, passes: int = 4) -> FieldMatrix:
    """Random invertible matrix built by row operations on the identity."""
    check_modulus(q)
    rows = [[1 if i == j else 0 for j in range(n)] for i in range(n)]
    for _ in range(passes * n * n):
        i, j = rng.integers(0, n, size=2)
        if i == j:
            continue
        f = int(rng.integers(0, q))
        rows[int(i)] = [(a + f * b) % q for a, b in zip(rows[int(i)], rows[int(j)])]
    perm = rng.permutation(n)
    return FieldMatrix.from_rows([rows[int(p)] for p in perm], q)
